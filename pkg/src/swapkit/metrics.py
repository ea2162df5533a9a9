"""Evaluation battery: identity retrieval, gaze fidelity, pluggable estimators.

Identity retrieval asks whether a swapped face's nearest gallery embedding
(cosine similarity) belongs to the right source person.  The eye-landmark
distance measures how far the swap's eye keypoints moved from the target's,
i.e. whether gaze direction survived.  Pose/expression/shape style metrics
are served through a generic external-estimator interface so heavyweight 3-D
models stay out of this package.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import (
    EmptyGallery,
    EstimatorUnavailable,
    IndexMismatch,
    NonNormalizedInput,
    ShapeMismatch,
)
from .geometry import LEFT_EYE, RIGHT_EYE, Landmarks

CORE_METRICS = ("id_retrieval_pct", "eye_ldmk")


@dataclass(frozen=True)
class EvalTriple:
    """Source, target and swap images with optional landmark sets."""

    source: np.ndarray
    target: np.ndarray
    swap: np.ndarray
    landmarks_source: Landmarks | None = None
    landmarks_target: Landmarks | None = None
    landmarks_swap: Landmarks | None = None

    def __post_init__(self):
        if self.target.shape != self.swap.shape:
            raise ShapeMismatch(
                f"target {self.target.shape} and swap {self.swap.shape} sizes differ"
            )


@dataclass
class MetricReport:
    """Metric values for one method; absent metrics stay ``None``/unlisted."""

    id_retrieval_pct: float | None = None
    eye_ldmk: float | None = None
    extra: dict[str, float] = field(default_factory=dict)

    def __post_init__(self):
        if self.id_retrieval_pct is not None and not 0.0 <= self.id_retrieval_pct <= 100.0:
            raise ValueError("id_retrieval_pct must be in [0, 100]")
        if self.eye_ldmk is not None and self.eye_ldmk < 0:
            raise ValueError("eye_ldmk must be >= 0")

    def as_dict(self) -> dict[str, float | None]:
        out: dict[str, float | None] = {
            "id_retrieval_pct": self.id_retrieval_pct,
            "eye_ldmk": self.eye_ldmk,
        }
        out.update(self.extra)
        return out

    def is_empty(self) -> bool:
        return self.id_retrieval_pct is None and self.eye_ldmk is None and not self.extra


def _require_unit(vectors: np.ndarray, what: str) -> None:
    norms = np.linalg.norm(vectors, axis=-1)
    if np.abs(norms - 1.0).max() > 1e-3:
        raise NonNormalizedInput(f"{what} embeddings must be unit-norm")


def id_retrieval(
    swap_embeddings: list[tuple[str, np.ndarray]],
    source_gallery: list[tuple[str, np.ndarray]],
) -> float:
    """Percentage of probes whose nearest gallery entry has the right person.

    Each probe is ``(true_person_id, embedding)``.  Nearest is by cosine
    similarity; ties resolve to the lowest gallery index.
    """
    if not source_gallery:
        raise EmptyGallery("retrieval gallery is empty")
    if not swap_embeddings:
        raise ValueError("no probe embeddings")
    gallery_ids = [pid for pid, _ in source_gallery]
    gallery = np.stack([np.asarray(v, dtype=np.float64) for _, v in source_gallery])
    probes = np.stack([np.asarray(v, dtype=np.float64) for _, v in swap_embeddings])
    _require_unit(gallery, "gallery")
    _require_unit(probes, "probe")
    sims = probes @ gallery.T
    nearest = np.argmax(sims, axis=1)  # first max wins ties
    correct = sum(
        1
        for (true_id, _), idx in zip(swap_embeddings, nearest)
        if gallery_ids[idx] == true_id
    )
    return 100.0 * correct / len(swap_embeddings)


def eye_ldmk(landmarks_swap: Landmarks, landmarks_tgt: Landmarks) -> float:
    """Mean Euclidean distance over the union of both eye index groups."""
    if len(landmarks_swap) != len(landmarks_tgt):
        raise IndexMismatch(
            f"point counts differ: {len(landmarks_swap)} vs {len(landmarks_tgt)}"
        )
    indices: list[int] = []
    for group in (LEFT_EYE, RIGHT_EYE):
        a = landmarks_swap.index_groups.get(group, ())
        b = landmarks_tgt.index_groups.get(group, ())
        if tuple(a) != tuple(b):
            raise IndexMismatch(f"{group} index groups differ: {a} vs {b}")
        indices.extend(a)
    if not indices:
        raise IndexMismatch("no eye landmarks in either set")
    diff = landmarks_swap.points[indices] - landmarks_tgt.points[indices]
    return float(np.linalg.norm(diff, axis=1).mean())


def external_metric(triples: list[EvalTriple], estimator, reference: str = "source") -> float:
    """Mean parameter-space distance between swap and reference images.

    ``estimator`` maps an image to a parameter vector.  ``reference`` is
    ``"source"`` for identity-style metrics (the swap should look like the
    source) or ``"target"`` for expression/pose-style metrics (the swap
    should move like the target).
    """
    if estimator is None:
        raise EstimatorUnavailable("no external estimator plugged in")
    if reference not in ("source", "target"):
        raise ValueError(f"reference must be 'source' or 'target', got {reference!r}")
    if not triples:
        raise ValueError("no evaluation triples")
    distances = []
    for triple in triples:
        ref_image = triple.source if reference == "source" else triple.target
        delta = np.asarray(estimator(triple.swap), dtype=np.float64) - np.asarray(
            estimator(ref_image), dtype=np.float64
        )
        distances.append(float(np.linalg.norm(delta)))
    return float(np.mean(distances))


def mean_pixel_estimator(image: np.ndarray) -> np.ndarray:
    """Mock estimator: one parameter, the mean pixel value."""
    return np.array([float(np.mean(image))])


ESTIMATORS = {"mean-pixel": mean_pixel_estimator}

MISSING_CELL = "—"  # em dash rendered for absent metrics


def _column_order(methods: dict[str, MetricReport]) -> list[str]:
    extras = sorted({name for rep in methods.values() for name in rep.extra})
    return list(CORE_METRICS) + extras


def render_report(methods: dict[str, MetricReport]) -> str:
    """Aligned text table; absent metrics render as a dash."""
    if not methods:
        raise ValueError("need at least one method")
    columns = _column_order(methods)
    header = ["method"] + columns
    rows = []
    for name in methods:
        values = methods[name].as_dict()
        row = [name]
        for col in columns:
            v = values.get(col)
            row.append(MISSING_CELL if v is None else f"{v:.6g}")
        rows.append(row)
    widths = [max(len(r[i]) for r in [header] + rows) for i in range(len(header))]
    lines = []
    for row in [header] + rows:
        lines.append("  ".join(cell.ljust(w) for cell, w in zip(row, widths)).rstrip())
    return "\n".join(lines) + "\n"


def save_report_csv(path, methods: dict[str, MetricReport]) -> None:
    """Machine-readable companion to the text table; empty cell = absent."""
    columns = _column_order(methods)
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("method," + ",".join(columns) + "\n")
        for name, rep in methods.items():
            values = rep.as_dict()
            cells = ["" if values.get(c) is None else repr(values[c]) for c in columns]
            fh.write(name + "," + ",".join(cells) + "\n")


def load_report_csv(path) -> dict[str, MetricReport]:
    with open(path, "r", encoding="utf-8") as fh:
        header = fh.readline().strip().split(",")
        if header[0] != "method":
            raise ValueError(f"unrecognized report header in {path}")
        columns = header[1:]
        methods: dict[str, MetricReport] = {}
        for line in fh:
            line = line.rstrip("\n")
            if not line:
                continue
            cells = line.split(",")
            name = cells[0]
            values = {
                col: (float(cell) if cell else None)
                for col, cell in zip(columns, cells[1:])
            }
            extra = {
                k: v for k, v in values.items() if k not in CORE_METRICS and v is not None
            }
            methods[name] = MetricReport(
                id_retrieval_pct=values.get("id_retrieval_pct"),
                eye_ldmk=values.get("eye_ldmk"),
                extra=extra,
            )
    return methods
