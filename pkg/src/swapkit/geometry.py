"""Face alignment geometry: landmarks, similarity transforms, warps and eye regions.

Coordinate convention: a point is ``(x, y)`` in pixels, where ``x`` indexes
columns and ``y`` rows, and integer coordinates fall on pixel centers.
Transforms are forward maps: an :class:`AffineTransform` built by
:func:`estimate_alignment` maps frame coordinates into crop coordinates.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import (
    DegenerateConfiguration,
    MissingEyeLandmarks,
    MissingOutlineLandmarks,
    ShapeMismatch,
    SingularTransform,
)

LEFT_EYE = "left_eye"
RIGHT_EYE = "right_eye"
FACE_OUTLINE = "face_outline"

# Five-point alignment template (left eye, right eye, nose tip, mouth corners)
# in a 112x112 crop; the conventional layout used by embedding-based face
# recognition stacks.  Scaled to the configured crop size by
# :func:`canonical_template`.
_TEMPLATE_112 = np.array(
    [
        [38.2946, 51.6963],
        [73.5318, 51.5014],
        [56.0252, 71.7366],
        [41.5493, 92.3655],
        [70.7299, 92.2041],
    ],
    dtype=np.float64,
)

ALIGNMENT_GROUPS = {
    LEFT_EYE: (0,),
    RIGHT_EYE: (1,),
}


@dataclass(frozen=True)
class Landmarks:
    """K ordered 2-D points plus named index groups.

    ``points`` has shape (K, 2); ``index_groups`` maps group names such as
    ``left_eye`` to tuples of point indices.  Groups must be disjoint and in
    range; coordinates must be finite.
    """

    points: np.ndarray
    index_groups: dict[str, tuple[int, ...]] = field(default_factory=dict)

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=np.float64)
        if pts.ndim != 2 or pts.shape[1] != 2:
            raise ShapeMismatch(f"landmarks must be (K, 2), got {pts.shape}")
        if not np.all(np.isfinite(pts)):
            raise ValueError("landmark coordinates must be finite")
        object.__setattr__(self, "points", pts)
        seen: set[int] = set()
        for name, idx in self.index_groups.items():
            idx = tuple(int(i) for i in idx)
            for i in idx:
                if not 0 <= i < len(pts):
                    raise IndexError(f"group {name!r} index {i} out of range")
                if i in seen:
                    raise ValueError(f"group index {i} used by more than one group")
                seen.add(i)

    def __len__(self) -> int:
        return len(self.points)

    def group(self, name: str) -> np.ndarray:
        idx = self.index_groups.get(name, ())
        return self.points[list(idx)]

    def transformed(self, transform: "AffineTransform") -> "Landmarks":
        return Landmarks(apply_transform(transform, self.points), dict(self.index_groups))

    def scaled(self, factor: float) -> "Landmarks":
        return Landmarks(self.points * float(factor), dict(self.index_groups))


@dataclass(frozen=True)
class AffineTransform:
    """2x3 matrix mapping source-space points to destination-space points."""

    matrix: np.ndarray

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=np.float64)
        if m.shape != (2, 3):
            raise ShapeMismatch(f"affine matrix must be 2x3, got {m.shape}")
        object.__setattr__(self, "matrix", m)

    @property
    def linear(self) -> np.ndarray:
        return self.matrix[:, :2]

    @property
    def translation(self) -> np.ndarray:
        return self.matrix[:, 2]

    def is_invertible(self) -> bool:
        return abs(np.linalg.det(self.linear)) > 1e-12

    @staticmethod
    def identity() -> "AffineTransform":
        return AffineTransform(np.array([[1.0, 0.0, 0.0], [0.0, 1.0, 0.0]]))


@dataclass(frozen=True)
class AlignedFace:
    """A face crop plus the transform that produced it.

    ``transform`` maps frame coordinates to crop coordinates.  ``landmarks``,
    when present, are in crop space and feed the eye loss during training.
    """

    crop: np.ndarray
    transform: AffineTransform
    frame_index: int = 0
    landmarks: Landmarks | None = None

    def __post_init__(self):
        if self.crop.ndim not in (2, 3):
            raise ShapeMismatch(f"crop must be HxW or HxWxC, got {self.crop.shape}")
        if self.frame_index < 0:
            raise ValueError("frame_index must be >= 0")
        if not self.transform.is_invertible():
            raise SingularTransform("aligned-face transform must be invertible")


@dataclass(frozen=True)
class EyeRegion:
    """Axis-aligned eye bounding box ``(x0, y0, x1, y1)``, half-open in pixels."""

    box: tuple[float, float, float, float]
    side: str

    def __post_init__(self):
        x0, y0, x1, y1 = self.box
        if not (x0 < x1 and y0 < y1):
            raise ValueError(f"degenerate eye box {self.box}")

    def pixel_slice(self) -> tuple[slice, slice]:
        """Row/column slices covering the box (floor/ceil to whole pixels)."""
        x0, y0, x1, y1 = self.box
        return (
            slice(int(np.floor(y0)), int(np.ceil(y1))),
            slice(int(np.floor(x0)), int(np.ceil(x1))),
        )


def canonical_template(size: int) -> Landmarks:
    """Five-point alignment template scaled to a ``size`` x ``size`` crop."""
    pts = _TEMPLATE_112 * (size / 112.0)
    return Landmarks(pts, dict(ALIGNMENT_GROUPS))


def apply_transform(transform: AffineTransform, points: np.ndarray) -> np.ndarray:
    pts = np.asarray(points, dtype=np.float64)
    return pts @ transform.linear.T + transform.translation


def estimate_alignment(landmarks: Landmarks, template: Landmarks) -> AffineTransform:
    """Least-squares similarity transform mapping ``landmarks`` onto ``template``.

    Solves for rotation, uniform scale and translation minimizing the sum of
    squared distances; reflections are excluded by the parameterization.

    Raises :class:`DegenerateConfiguration` when the source points are all
    collinear or coincident.
    """
    src = np.asarray(landmarks.points, dtype=np.float64)
    dst = np.asarray(template.points, dtype=np.float64)
    if src.shape != dst.shape:
        raise ShapeMismatch(f"point counts differ: {src.shape} vs {dst.shape}")
    _require_noncollinear(src)

    # Similarity as linear parameters (a, b, tx, ty) with matrix [[a,-b],[b,a]].
    n = len(src)
    design = np.zeros((2 * n, 4))
    design[0::2, 0] = src[:, 0]
    design[0::2, 1] = -src[:, 1]
    design[0::2, 2] = 1.0
    design[1::2, 0] = src[:, 1]
    design[1::2, 1] = src[:, 0]
    design[1::2, 3] = 1.0
    rhs = dst.reshape(-1)
    (a, b, tx, ty), *_ = np.linalg.lstsq(design, rhs, rcond=None)
    return AffineTransform(np.array([[a, -b, tx], [b, a, ty]]))


def _require_noncollinear(points: np.ndarray) -> None:
    if len(points) < 3:
        raise DegenerateConfiguration("need at least 3 points")
    centered = points - points.mean(axis=0)
    svals = np.linalg.svd(centered, compute_uv=False)
    if svals[0] < 1e-12 or svals[1] <= 1e-9 * svals[0]:
        raise DegenerateConfiguration("points are collinear or coincident")


def invert(transform: AffineTransform) -> AffineTransform:
    """Closed-form inverse; raises :class:`SingularTransform` when not invertible."""
    lin = transform.linear
    det = lin[0, 0] * lin[1, 1] - lin[0, 1] * lin[1, 0]
    if abs(det) < 1e-12:
        raise SingularTransform(f"determinant {det} too small")
    inv_lin = np.array([[lin[1, 1], -lin[0, 1]], [-lin[1, 0], lin[0, 0]]]) / det
    inv_t = -inv_lin @ transform.translation
    return AffineTransform(np.hstack([inv_lin, inv_t[:, None]]))


def compose(first: AffineTransform, second: AffineTransform) -> AffineTransform:
    """Transform equal to applying ``second`` then ``first``."""
    lin = first.linear @ second.linear
    t = first.linear @ second.translation + first.translation
    return AffineTransform(np.hstack([lin, t[:, None]]))


def warp(image: np.ndarray, transform: AffineTransform, out_size: tuple[int, int]) -> np.ndarray:
    """Resample ``image`` under a forward affine map.

    ``transform`` maps input-image coordinates to output coordinates; each
    output pixel samples the input at the inverse-mapped position with
    bilinear interpolation.  Samples outside the input are zero.  The identity
    transform at unchanged size reproduces the input bit-exactly.
    """
    img = np.asarray(image)
    if img.size == 0:
        raise ShapeMismatch("cannot warp an empty image")
    h_out, w_out = out_size
    inv = invert(transform).matrix

    xs, ys = np.meshgrid(np.arange(w_out, dtype=np.float64), np.arange(h_out, dtype=np.float64))
    sx = inv[0, 0] * xs + inv[0, 1] * ys + inv[0, 2]
    sy = inv[1, 0] * xs + inv[1, 1] * ys + inv[1, 2]

    x0 = np.floor(sx)
    y0 = np.floor(sy)
    fx = sx - x0
    fy = sy - y0
    x0 = x0.astype(np.int64)
    y0 = y0.astype(np.int64)

    h_in, w_in = img.shape[:2]

    def tap(yi, xi):
        inb = (yi >= 0) & (yi < h_in) & (xi >= 0) & (xi < w_in)
        v = img[np.clip(yi, 0, h_in - 1), np.clip(xi, 0, w_in - 1)]
        mask = inb if img.ndim == 2 else inb[..., None]
        return np.where(mask, v, 0.0)

    w00 = (1.0 - fx) * (1.0 - fy)
    w01 = fx * (1.0 - fy)
    w10 = (1.0 - fx) * fy
    w11 = fx * fy
    if img.ndim == 3:
        w00, w01, w10, w11 = (w[..., None] for w in (w00, w01, w10, w11))
    out = (
        w00 * tap(y0, x0)
        + w01 * tap(y0, x0 + 1)
        + w10 * tap(y0 + 1, x0)
        + w11 * tap(y0 + 1, x0 + 1)
    )
    return out.astype(img.dtype, copy=False) if img.dtype == np.float64 else out


def eye_regions(
    landmarks: Landmarks, margin: float, size: tuple[int, int]
) -> tuple[EyeRegion, EyeRegion]:
    """Bounding boxes of both eye groups expanded by ``margin``.

    ``size`` is the ``(H, W)`` of the image the boxes are clamped to.
    """
    h, w = size
    regions = []
    for side in (LEFT_EYE, RIGHT_EYE):
        pts = landmarks.group(side)
        if len(pts) == 0:
            raise MissingEyeLandmarks(f"no landmarks for {side}")
        x0 = max(float(pts[:, 0].min()) - margin, 0.0)
        y0 = max(float(pts[:, 1].min()) - margin, 0.0)
        x1 = min(float(pts[:, 0].max()) + margin, float(w))
        y1 = min(float(pts[:, 1].max()) + margin, float(h))
        regions.append(EyeRegion((x0, y0, x1, y1), side.removesuffix("_eye")))
    return regions[0], regions[1]


def face_width(landmarks: Landmarks) -> float:
    """Horizontal extent of the face-outline points, in pixels."""
    pts = landmarks.group(FACE_OUTLINE)
    if len(pts) < 2:
        raise MissingOutlineLandmarks("face_outline needs at least 2 points")
    return float(pts[:, 0].max() - pts[:, 0].min())


def save_landmarks(path, frames: dict[int, Landmarks]) -> None:
    """Write landmark rows ``frame_index, point_index, x, y`` (CSV)."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("frame_index,point_index,x,y\n")
        for frame_index in sorted(frames):
            for point_index, (x, y) in enumerate(frames[frame_index].points):
                fh.write(f"{frame_index},{point_index},{float(x)!r},{float(y)!r}\n")


def load_landmarks(path, index_groups: dict[str, tuple[int, ...]]) -> dict[int, Landmarks]:
    """Read the CSV produced by :func:`save_landmarks`.

    Group definitions are supplied by the caller (they live in the pipeline
    config, not in the file).
    """
    rows: dict[int, dict[int, tuple[float, float]]] = {}
    with open(path, "r", encoding="utf-8") as fh:
        header = fh.readline()
        if not header.startswith("frame_index"):
            raise ValueError(f"unrecognized landmark file header in {path}")
        for line in fh:
            line = line.strip()
            if not line:
                continue
            f, p, x, y = line.split(",")
            rows.setdefault(int(f), {})[int(p)] = (float(x), float(y))
    out = {}
    for frame_index, pts in rows.items():
        k = max(pts) + 1
        arr = np.zeros((k, 2))
        for i, xy in pts.items():
            arr[i] = xy
        out[frame_index] = Landmarks(arr, dict(index_groups))
    return out
