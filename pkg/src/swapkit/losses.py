"""The five training loss terms and their weighted aggregation.

Identity, adversarial, attribute, reconstruction and eye terms.  The
reconstruction term is gated: it only fires when source and target belong to
the same person, in which case the swap must leave the target untouched.
The eye term compares features of the eye regions (by default raw pixels
resized to a fixed patch) between the target and the generated image, keeping
gaze direction stable.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import torch
import torch.nn.functional as F

from .errors import NonFiniteTerm, NonNormalizedInput, ShapeMismatch
from .geometry import Landmarks, eye_regions
from .network.attribute import AttributeFeatureStack
from .network.discriminator import RealismScores

TERM_NAMES = ("id", "adv", "rec", "att", "eye")


@dataclass(frozen=True)
class LossWeights:
    """Nonnegative weights for the five terms; at least one must be positive."""

    w_id: float = 5.0
    w_adv: float = 1.0
    w_rec: float = 10.0
    w_att: float = 10.0
    w_eye: float = 1.0

    def __post_init__(self):
        values = self.as_tuple()
        if any(w < 0 for w in values):
            raise ValueError("loss weights must be nonnegative")
        if not any(w > 0 for w in values):
            raise ValueError("at least one loss weight must be positive")

    def as_tuple(self) -> tuple[float, float, float, float, float]:
        return (self.w_id, self.w_adv, self.w_rec, self.w_att, self.w_eye)


@dataclass(frozen=True)
class LossReport:
    """Per-term scalars, their weighted total, and the batch pair flag."""

    l_id: float
    l_adv: float
    l_rec: float
    l_att: float
    l_eye: float
    total: float
    same_person_flag: bool

    def terms(self) -> tuple[float, float, float, float, float]:
        return (self.l_id, self.l_adv, self.l_rec, self.l_att, self.l_eye)


def identity_loss(z_gen: torch.Tensor, z_src: torch.Tensor) -> torch.Tensor:
    """1 - cosine similarity between unit-norm embeddings, in [0, 2].

    Batched inputs average over the batch.  Raises
    :class:`NonNormalizedInput` when either norm strays more than 1e-3
    from 1.
    """
    if z_gen.shape != z_src.shape:
        raise ShapeMismatch(f"{tuple(z_gen.shape)} vs {tuple(z_src.shape)}")
    for z in (z_gen, z_src):
        norms = z.norm(dim=-1)
        if (norms - 1.0).abs().max().item() > 1e-3:
            raise NonNormalizedInput("identity vectors must be unit-norm")
    cos = (z_gen * z_src).sum(dim=-1)
    return (1.0 - cos).mean()


def attribute_loss(
    att_gen: AttributeFeatureStack, att_tgt: AttributeFeatureStack
) -> torch.Tensor:
    """Half the sum over levels of mean squared feature difference."""
    if len(att_gen) != len(att_tgt):
        raise ShapeMismatch(f"{len(att_gen)} vs {len(att_tgt)} levels")
    total = None
    for a, b in zip(att_gen.levels, att_tgt.levels):
        if a.shape != b.shape:
            raise ShapeMismatch(f"level shapes differ: {tuple(a.shape)} vs {tuple(b.shape)}")
        term = ((a - b) ** 2).mean()
        total = term if total is None else total + term
    return 0.5 * total


def reconstruction_loss(y: torch.Tensor, x_t: torch.Tensor, same_person: bool) -> torch.Tensor:
    """Half mean squared pixel error, but only for same-person pairs."""
    if y.shape != x_t.shape:
        raise ShapeMismatch(f"{tuple(y.shape)} vs {tuple(x_t.shape)}")
    if not same_person:
        return y.new_zeros(())
    return 0.5 * ((y - x_t) ** 2).mean()


class PixelEyeFeatures:
    """Default eye-feature extractor: crop pixels resized to a fixed patch.

    Resizing decouples the loss scale from the landmark-derived box size.  A
    hook from an external keypoint network can replace this extractor.
    """

    def __init__(self, patch_size: int = 16):
        self.patch_size = patch_size

    def __call__(self, crop: torch.Tensor) -> torch.Tensor:
        return F.interpolate(
            crop[None],
            size=(self.patch_size, self.patch_size),
            mode="bilinear",
            align_corners=False,
        )[0]


def eye_loss(
    y: torch.Tensor,
    x_t: torch.Tensor,
    landmarks_t: Landmarks,
    margin: float = 4.0,
    extractor=None,
    patch_size: int = 16,
) -> torch.Tensor:
    """Mean squared eye-feature difference between target and generated crops.

    ``y`` and ``x_t`` are (C, H, W) tensors; ``landmarks_t`` is in the same
    crop space.  Both eye regions are taken from the target landmarks, so the
    loss is local: pixels outside the (margin-expanded) eye boxes never
    contribute.
    """
    if y.shape != x_t.shape:
        raise ShapeMismatch(f"{tuple(y.shape)} vs {tuple(x_t.shape)}")
    if extractor is None:
        extractor = PixelEyeFeatures(patch_size)
    h, w = y.shape[-2:]
    regions = eye_regions(landmarks_t, margin, (h, w))
    total = None
    for region in regions:
        rows, cols = region.pixel_slice()
        f_gen = extractor(y[..., rows, cols])
        f_tgt = extractor(x_t[..., rows, cols])
        term = ((f_gen - f_tgt) ** 2).mean()
        total = term if total is None else total + term
    return total / len(regions)


def adversarial_losses(
    real_scores: RealismScores, fake_scores: RealismScores
) -> tuple[torch.Tensor, torch.Tensor]:
    """Hinge GAN losses, averaged over discriminator scales.

    Returns ``(g_loss, d_loss)`` where the generator pushes fake scores up
    (g = -mean fake) and the discriminator enforces the +-1 hinge margins.
    """
    if len(real_scores.maps) != len(fake_scores.maps):
        raise ShapeMismatch(
            f"{len(real_scores.maps)} vs {len(fake_scores.maps)} score scales"
        )
    g_terms, d_terms = [], []
    for real, fake in zip(real_scores.maps, fake_scores.maps):
        d_terms.append(F.relu(1.0 - real).mean() + F.relu(1.0 + fake).mean())
        g_terms.append(-fake.mean())
    g_loss = torch.stack(g_terms).mean()
    d_loss = torch.stack(d_terms).mean()
    return g_loss, d_loss


def weighted_total(terms: dict[str, torch.Tensor], weights: LossWeights) -> torch.Tensor:
    """Differentiable weighted sum in the fixed term order."""
    w = dict(zip(TERM_NAMES, weights.as_tuple()))
    total = None
    for name in TERM_NAMES:
        part = w[name] * terms[name]
        total = part if total is None else total + part
    return total


def total_loss(
    terms: dict[str, float | torch.Tensor],
    weights: LossWeights,
    same_person: bool = False,
) -> LossReport:
    """Aggregate term scalars into a report; rejects non-finite terms."""
    values = {}
    for name in TERM_NAMES:
        v = float(terms[name])
        if not math.isfinite(v):
            raise NonFiniteTerm(f"loss term {name!r} is {v}")
        values[name] = v
    total = 0.0
    for name, w in zip(TERM_NAMES, weights.as_tuple()):
        total += w * values[name]
    return LossReport(
        l_id=values["id"],
        l_adv=values["adv"],
        l_rec=values["rec"],
        l_att=values["att"],
        l_eye=values["eye"],
        total=total,
        same_person_flag=bool(same_person),
    )
