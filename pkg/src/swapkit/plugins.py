"""Pluggable pipeline pieces: landmark providers, masks, post-processors.

No learned detector or segmenter ships here.  Landmarks come either from
sidecar files written by the synthetic data generator or from precomputed
detection files in the same CSV format; segmentation masks come either from
the landmark outline (convex hull) or from external grayscale mask files.
"""

from __future__ import annotations

import os

import numpy as np
from scipy.ndimage import zoom

from . import geometry
from .blending import FaceMask, binary_mask_from_outline, mask_from_grayscale
from .errors import IoFailure
from .geometry import Landmarks


def sidecar_path(image_path) -> str:
    base, _ = os.path.splitext(os.fspath(image_path))
    return base + ".landmarks.csv"


def mask_sidecar_path(image_path) -> str:
    base, _ = os.path.splitext(os.fspath(image_path))
    return base + ".mask.png"


class SyntheticOracleProvider:
    """Landmarks from the per-image sidecar files the synthetic generator writes."""

    def __init__(self, index_groups: dict[str, tuple[int, ...]]):
        self.index_groups = dict(index_groups)

    def for_image(self, image_path) -> Landmarks | None:
        path = sidecar_path(image_path)
        if not os.path.exists(path):
            return None
        frames = geometry.load_landmarks(path, self.index_groups)
        if not frames:
            return None
        return frames[min(frames)]


class ExternalFileProvider:
    """Precomputed detections from an external keypoint model.

    Either one CSV per frames directory (rows keyed by frame index, loaded
    once) or per-image sidecars in the same serialization format.
    """

    def __init__(self, index_groups: dict[str, tuple[int, ...]], detections_file=None):
        self.index_groups = dict(index_groups)
        self._table: dict[int, Landmarks] | None = None
        if detections_file is not None:
            if not os.path.exists(detections_file):
                raise IoFailure(f"detections file {detections_file} not found")
            self._table = geometry.load_landmarks(detections_file, self.index_groups)

    def for_image(self, image_path, frame_index: int | None = None) -> Landmarks | None:
        if self._table is not None:
            if frame_index is None:
                frame_index = min(self._table, default=0)
            return self._table.get(frame_index)
        path = sidecar_path(image_path)
        if not os.path.exists(path):
            return None
        frames = geometry.load_landmarks(path, self.index_groups)
        return frames.get(frame_index, frames[min(frames)]) if frames else None


def build_landmark_provider(kind: str, index_groups, detections_file=None):
    if kind == "synthetic":
        return SyntheticOracleProvider(index_groups)
    if kind == "file":
        return ExternalFileProvider(index_groups, detections_file)
    raise ValueError(f"unknown landmark provider {kind!r}")


def crop_space_mask(
    kind: str,
    image_path,
    landmarks_crop: Landmarks,
    transform: geometry.AffineTransform,
    crop_size: int,
) -> FaceMask:
    """Binary crop-space mask from the configured segmentation source.

    ``outline`` rasterizes the convex hull of the crop-space outline points;
    ``file`` warps an external frame-space grayscale mask into crop space and
    re-thresholds it to keep it binary.
    """
    if kind == "outline":
        return binary_mask_from_outline(landmarks_crop, (crop_size, crop_size))
    if kind == "file":
        path = mask_sidecar_path(image_path)
        if not os.path.exists(path):
            raise IoFailure(f"segmentation mask {path} not found")
        from PIL import Image as PILImage

        with PILImage.open(path) as img:
            gray = np.asarray(img.convert("L"))
        frame_mask = mask_from_grayscale(gray)
        warped = geometry.warp(frame_mask.values, transform, (crop_size, crop_size))
        return FaceMask((warped >= 0.5).astype(np.float64), "crop")
    raise ValueError(f"unknown segmentation provider {kind!r}")


class IdentityPostProcessor:
    """Bit-exact passthrough."""

    factor = 1

    def __call__(self, image: np.ndarray) -> np.ndarray:
        return image


class BicubicPostProcessor:
    """Cubic 2x upscaler standing in for a learned super-resolution block."""

    def __init__(self, factor: int = 2):
        self.factor = factor

    def __call__(self, image: np.ndarray) -> np.ndarray:
        scaled = zoom(image, (self.factor, self.factor, 1), order=3)
        return np.clip(scaled, -1.0, 1.0)


def build_post_processor(kind: str):
    if kind == "identity":
        return IdentityPostProcessor()
    if kind == "bicubic2x":
        return BicubicPostProcessor(2)
    raise ValueError(f"unknown post processor {kind!r}")


def refine_eye_landmarks(
    image: np.ndarray, landmarks: Landmarks, window: int = 5
) -> Landmarks:
    """Snap eye points to the local darkness centroid of the image.

    A deterministic pixel-space stand-in for a keypoint detector: within a
    window around each eye point, dark pixels (irises) pull the point toward
    their intensity-weighted centroid.  Non-eye points pass through.
    """
    brightness = image.mean(axis=2) if image.ndim == 3 else image
    h, w = brightness.shape
    points = landmarks.points.copy()
    eye_indices = [
        i
        for group in (geometry.LEFT_EYE, geometry.RIGHT_EYE)
        for i in landmarks.index_groups.get(group, ())
    ]
    for i in eye_indices:
        x, y = points[i]
        x0 = max(int(round(x)) - window, 0)
        x1 = min(int(round(x)) + window + 1, w)
        y0 = max(int(round(y)) - window, 0)
        y1 = min(int(round(y)) + window + 1, h)
        if x0 >= x1 or y0 >= y1:
            continue
        patch = brightness[y0:y1, x0:x1]
        darkness = np.clip(patch.max() - patch, 0.0, None) ** 2
        total = darkness.sum()
        if total <= 1e-12:
            continue
        ys, xs = np.mgrid[y0:y1, x0:x1]
        points[i, 0] = float((xs * darkness).sum() / total)
        points[i, 1] = float((ys * darkness).sum() / total)
    return Landmarks(points, dict(landmarks.index_groups))
