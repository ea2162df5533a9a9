"""Mask construction, softening, adaptive scaling and frame compositing.

The compositing path turns a binary face mask in crop space into a soft
alpha, warps it together with the generated crop back into the frame, and
alpha-blends.  When generated and target faces differ significantly in
width, the binary mask is dilated (to carry the wider head shape across) or
eroded with extra blur (to hide a narrower face's border).
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace

import numpy as np
from scipy.ndimage import binary_dilation, binary_erosion, correlate1d

from . import geometry
from .errors import DegenerateOutline, ShapeMismatch, SingularTransform, ZeroTargetWidth
from .geometry import AffineTransform, Landmarks

CROP_SPACE = "crop"
FRAME_SPACE = "frame"

ENLARGE = "enlarge"
SHRINK = "shrink"
KEEP = "keep"

# Values this close to 0 or 1 after blurring snap to exactly 0/1, so pixels
# fully inside or outside the mask keep their exact-blend guarantees.
_SNAP_EPS = 1e-12


@dataclass(frozen=True)
class FaceMask:
    """H x W soft alpha in [0, 1], tagged with its coordinate space."""

    values: np.ndarray
    space: str = CROP_SPACE

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64)
        if v.ndim != 2:
            raise ShapeMismatch(f"mask must be HxW, got {v.shape}")
        if not np.all(np.isfinite(v)):
            raise ValueError("mask values must be finite")
        if v.size and (v.min() < 0.0 or v.max() > 1.0):
            raise ValueError("mask values must lie in [0, 1]")
        if self.space not in (CROP_SPACE, FRAME_SPACE):
            raise ValueError(f"unknown mask space {self.space!r}")
        object.__setattr__(self, "values", v)

    def is_binary(self) -> bool:
        return bool(np.all((self.values == 0.0) | (self.values == 1.0)))


@dataclass(frozen=True)
class BlendConfig:
    """Edge softening and adaptive-scaling parameters.

    ``sigma`` is the Gaussian std in pixels (5 at a 256 crop; use
    :meth:`for_crop_size` to scale it).  ``kernel_radius`` defaults to
    ceil(3 sigma).  Width ratios above ``enlarge_threshold`` dilate the mask,
    below ``shrink_threshold`` erode it and multiply sigma by
    ``shrink_sigma_gain``.
    """

    sigma: float = 5.0
    kernel_radius: int | None = None
    enlarge_threshold: float = 1.05
    shrink_threshold: float = 0.95
    max_scale_px: int = 50
    shrink_sigma_gain: float = 1.5

    def __post_init__(self):
        if self.sigma <= 0:
            raise ValueError("sigma must be > 0")
        if not self.shrink_threshold < 1.0 < self.enlarge_threshold:
            raise ValueError("thresholds must satisfy shrink < 1 < enlarge")
        if self.kernel_radius is not None and self.kernel_radius < 0:
            raise ValueError("kernel_radius must be >= 0")
        if self.shrink_sigma_gain < 1.0:
            raise ValueError("shrink_sigma_gain must be >= 1")

    @property
    def effective_kernel_radius(self) -> int:
        if self.kernel_radius is not None:
            return self.kernel_radius
        return int(math.ceil(3.0 * self.sigma))

    @classmethod
    def for_crop_size(cls, size: int, **overrides) -> "BlendConfig":
        overrides.setdefault("sigma", 5.0 * size / 256.0)
        return cls(**overrides)


@dataclass(frozen=True)
class FrameSwapInputs:
    """Everything needed to composite one generated crop into one frame.

    ``transform`` maps frame coordinates to crop coordinates; landmarks are
    in crop space.
    """

    frame: np.ndarray
    generated_crop: np.ndarray
    transform: AffineTransform
    mask_crop: FaceMask
    landmarks_gen: Landmarks
    landmarks_tgt: Landmarks

    def __post_init__(self):
        if self.generated_crop.shape[:2] != self.mask_crop.values.shape:
            raise ShapeMismatch(
                f"crop {self.generated_crop.shape[:2]} vs mask "
                f"{self.mask_crop.values.shape}"
            )
        if not self.transform.is_invertible():
            raise SingularTransform("frame-to-crop transform must be invertible")


def _convex_hull(points: np.ndarray) -> np.ndarray:
    """Monotone-chain convex hull, counter-clockwise; collinear points dropped."""
    pts = sorted({(float(x), float(y)) for x, y in points})
    if len(pts) < 3:
        return np.asarray(pts)

    def cross(o, a, b):
        return (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])

    lower: list[tuple[float, float]] = []
    for p in pts:
        while len(lower) >= 2 and cross(lower[-2], lower[-1], p) <= 0:
            lower.pop()
        lower.append(p)
    upper: list[tuple[float, float]] = []
    for p in reversed(pts):
        while len(upper) >= 2 and cross(upper[-2], upper[-1], p) <= 0:
            upper.pop()
        upper.append(p)
    return np.asarray(lower[:-1] + upper[:-1])


def binary_mask_from_outline(landmarks: Landmarks, size: tuple[int, int]) -> FaceMask:
    """Filled convex hull of the face-outline points, rasterized to {0, 1}.

    Pixel centers on the hull boundary count as inside.  Raises
    :class:`DegenerateOutline` when the outline is collinear.
    """
    outline = landmarks.group(geometry.FACE_OUTLINE)
    if len(outline) < 3:
        raise DegenerateOutline("face outline needs at least 3 points")
    hull = _convex_hull(outline)
    if len(hull) < 3:
        raise DegenerateOutline("face outline points are collinear")

    h, w = size
    xs, ys = np.meshgrid(np.arange(w, dtype=np.float64), np.arange(h, dtype=np.float64))
    inside = np.ones((h, w), dtype=bool)
    n = len(hull)
    for i in range(n):
        x1, y1 = hull[i]
        x2, y2 = hull[(i + 1) % n]
        side = (x2 - x1) * (ys - y1) - (y2 - y1) * (xs - x1)
        inside &= side >= -1e-9
    return FaceMask(inside.astype(np.float64), CROP_SPACE)


def mask_from_grayscale(gray: np.ndarray) -> FaceMask:
    """Binary mask from an externally supplied 8-bit grayscale image (>=128 -> 1)."""
    g = np.asarray(gray)
    if g.ndim == 3:
        g = g[..., 0]
    return FaceMask((g >= 128).astype(np.float64), CROP_SPACE)


def gaussian_soften(mask: FaceMask, config: BlendConfig) -> FaceMask:
    """Separable Gaussian blur with a truncated normalized kernel.

    Uses a reflective boundary, which preserves total mask mass.  A kernel
    radius of 0 returns the input unchanged.
    """
    radius = config.effective_kernel_radius
    if radius == 0:
        return FaceMask(mask.values.copy(), mask.space)
    x = np.arange(-radius, radius + 1, dtype=np.float64)
    kernel = np.exp(-0.5 * (x / config.sigma) ** 2)
    kernel /= kernel.sum()
    out = correlate1d(mask.values, kernel, axis=0, mode="reflect")
    out = correlate1d(out, kernel, axis=1, mode="reflect")
    out = np.clip(out, 0.0, 1.0)
    out[out < _SNAP_EPS] = 0.0
    out[out > 1.0 - _SNAP_EPS] = 1.0
    return FaceMask(out, mask.space)


def mask_adaptation(
    landmarks_gen: Landmarks, landmarks_tgt: Landmarks, config: BlendConfig
) -> tuple[str, int, float]:
    """Pick a mask-scaling mode from the generated/target face-width ratio.

    Returns ``(mode, radius_px, sigma_eff)``: a significantly wider generated
    face enlarges the mask by half the width gap (capped); a narrower one
    shrinks it and boosts the blur.
    """
    width_gen = geometry.face_width(landmarks_gen)
    width_tgt = geometry.face_width(landmarks_tgt)
    if width_tgt <= 0.0:
        raise ZeroTargetWidth("target face width is zero")
    ratio = width_gen / width_tgt
    if ratio > config.enlarge_threshold:
        radius = math.ceil((ratio - 1.0) * width_tgt / 2.0 - 1e-9)
        return ENLARGE, min(radius, config.max_scale_px), config.sigma
    if ratio < config.shrink_threshold:
        radius = math.ceil((1.0 - ratio) * width_tgt / 2.0 - 1e-9)
        return SHRINK, min(radius, config.max_scale_px), config.sigma * config.shrink_sigma_gain
    return KEEP, 0, config.sigma


def _disk(radius: int) -> np.ndarray:
    span = np.arange(-radius, radius + 1)
    dy, dx = np.meshgrid(span, span, indexing="ij")
    return dy * dy + dx * dx <= radius * radius


def morph_scale(mask: FaceMask, mode: str, radius_px: int) -> FaceMask:
    """Dilate (enlarge) or erode (shrink) a binary mask with a disk element."""
    if not mask.is_binary():
        raise ValueError("morph_scale expects a binary mask (apply before softening)")
    if mode == KEEP or radius_px == 0:
        return FaceMask(mask.values.copy(), mask.space)
    binary = mask.values > 0.5
    disk = _disk(radius_px)
    if mode == ENLARGE:
        out = binary_dilation(binary, structure=disk)
    elif mode == SHRINK:
        # border_value=1: pixels outside the image never erode the interior
        out = binary_erosion(binary, structure=disk, border_value=1)
    else:
        raise ValueError(f"unknown morph mode {mode!r}")
    return FaceMask(out.astype(np.float64), mask.space)


def composite(inputs: FrameSwapInputs, config: BlendConfig) -> np.ndarray:
    """Blend a generated crop into its frame through the adaptive soft mask.

    Pixels whose frame-space alpha is exactly 0 are bit-exact copies of the
    frame; alpha exactly 1 copies the warped crop.
    """
    mode, radius, sigma_eff = mask_adaptation(
        inputs.landmarks_gen, inputs.landmarks_tgt, config
    )
    mask = morph_scale(inputs.mask_crop, mode, radius)
    mask = gaussian_soften(mask, replace(config, sigma=sigma_eff))

    to_frame = geometry.invert(inputs.transform)
    frame = np.asarray(inputs.frame, dtype=np.float64)
    frame_size = frame.shape[:2]
    alpha = geometry.warp(mask.values, to_frame, frame_size)
    crop_in_frame = geometry.warp(
        np.asarray(inputs.generated_crop, dtype=np.float64), to_frame, frame_size
    )
    if frame.ndim == 3:
        alpha = alpha[..., None]
    blended = alpha * crop_in_frame + (1.0 - alpha) * frame
    out = np.where(alpha == 0.0, frame, np.where(alpha == 1.0, crop_in_frame, blended))
    return out


def swap_video_frames(
    frames: list[np.ndarray],
    inputs: list[FrameSwapInputs | None],
    config: BlendConfig,
    workers: int = 1,
) -> tuple[list[np.ndarray], list[tuple[int, Exception]]]:
    """Composite a frame sequence, preserving order regardless of parallelism.

    ``inputs[i] is None`` marks a frame with no detected face; it passes
    through unchanged.  A frame whose composite raises is also passed through
    and the exception is recorded in the returned error list.
    """
    if len(frames) != len(inputs):
        raise ShapeMismatch(f"{len(frames)} frames vs {len(inputs)} inputs")

    def one(i: int):
        entry = inputs[i]
        if entry is None:
            return frames[i], None
        try:
            return composite(entry, config), None
        except Exception as exc:  # per-frame isolation: record and continue
            return frames[i], exc

    if workers <= 1:
        results = [one(i) for i in range(len(frames))]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(one, range(len(frames))))
    out_frames = [r[0] for r in results]
    errors = [(i, r[1]) for i, r in enumerate(results) if r[1] is not None]
    return out_frames, errors
