"""Pair sampling, the adversarial train step, and the training loop.

Training alternates one discriminator update (hinge loss on real target
crops vs detached generated crops) with one generator update on the full
weighted objective.  Same-person and identical pairs are drawn at
configurable rates; the reconstruction term only fires for them.
"""

from __future__ import annotations

import math
import os
from dataclasses import dataclass, field

import numpy as np
import torch
import torch.nn as nn

from .errors import EmptyDataset, NonFiniteLoss, ShapeMismatch
from .geometry import AffineTransform, AlignedFace
from .imageio import load_image, to_batch
from .losses import (
    LossReport,
    LossWeights,
    adversarial_losses,
    attribute_loss,
    eye_loss,
    identity_loss,
    reconstruction_loss,
    total_loss,
    weighted_total,
)
from .network import FaceSwapper, save_checkpoint
from .network.discriminator import RealismScores

LOG_HEADER = "step,l_id,l_adv,l_rec,l_att,l_eye,total,same_flag"


@dataclass(frozen=True)
class TrainConfig:
    """Loop hyperparameters; defaults are the desk-scale preset."""

    epochs: int = 5
    batch_size: int = 4
    p_identical: float = 0.2
    p_same_person: float = 0.5
    lr_generator: float = 4e-4
    lr_discriminator: float = 4e-4
    beta1: float = 0.0
    beta2: float = 0.999
    seed: int = 0
    checkpoint_every: int = 1000

    def __post_init__(self):
        if not 0.0 <= self.p_identical <= self.p_same_person <= 1.0:
            raise ValueError("need 0 <= p_identical <= p_same_person <= 1")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.epochs < 0:
            raise ValueError("epochs must be >= 0")
        if self.checkpoint_every < 1:
            raise ValueError("checkpoint_every must be >= 1")


# Reference regime from the full-scale training run this design targets;
# not runnable at desk scale.
TRAIN_PRESETS = {
    "desk": TrainConfig(),
    "reference": TrainConfig(epochs=12, batch_size=19),
}


@dataclass(frozen=True)
class PairSample:
    """Source/target crops plus the sampling regime flags."""

    x_s: AlignedFace
    x_t: AlignedFace
    same_person: bool
    identical: bool

    def __post_init__(self):
        if self.identical and not self.same_person:
            raise ValueError("identical pairs are same-person by definition")
        if self.x_s.crop.shape != self.x_t.crop.shape:
            raise ShapeMismatch(
                f"crop shapes differ: {self.x_s.crop.shape} vs {self.x_t.crop.shape}"
            )


@dataclass
class Dataset:
    """Persons mapped to their ordered aligned frames."""

    persons: dict[str, list[AlignedFace]]
    _keys: list[str] = field(init=False, repr=False)

    def __post_init__(self):
        if not self.persons:
            raise EmptyDataset("dataset has no persons")
        for person, frames in self.persons.items():
            if not frames:
                raise EmptyDataset(f"person {person!r} has no frames")
        self._keys = sorted(self.persons)

    @property
    def person_ids(self) -> list[str]:
        return list(self._keys)

    @property
    def total_frames(self) -> int:
        return sum(len(frames) for frames in self.persons.values())


def load_dataset(root, index_groups=None) -> Dataset:
    """Read ``<root>/<person>/<frame>.png`` with optional landmark sidecars."""
    from .geometry import load_landmarks

    root = os.fspath(root)
    persons: dict[str, list[AlignedFace]] = {}
    for person in sorted(os.listdir(root)):
        person_dir = os.path.join(root, person)
        if not os.path.isdir(person_dir):
            continue
        frames = []
        names = sorted(n for n in os.listdir(person_dir) if n.endswith(".png") and ".mask" not in n)
        for i, name in enumerate(names):
            crop = load_image(os.path.join(person_dir, name))
            landmarks = None
            sidecar = os.path.join(person_dir, name[:-4] + ".landmarks.csv")
            if index_groups is not None and os.path.exists(sidecar):
                frames_lm = load_landmarks(sidecar, index_groups)
                landmarks = next(iter(frames_lm.values()))
            frames.append(
                AlignedFace(
                    crop=crop,
                    transform=AffineTransform.identity(),
                    frame_index=i,
                    landmarks=landmarks,
                )
            )
        if frames:
            persons[person] = frames
    return Dataset(persons)


def sample_pair(dataset: Dataset, config: TrainConfig, rng: np.random.Generator) -> PairSample:
    """Draw one pair: identical, same-person different-frame, or cross-person.

    Persons with a single frame degrade the same-person branch to an
    identical pair.  Deterministic given the generator state.
    """
    keys = dataset.person_ids
    u = rng.random()
    if u < config.p_same_person:
        person = keys[rng.integers(len(keys))]
        frames = dataset.persons[person]
        if u < config.p_identical or len(frames) < 2:
            frame = frames[rng.integers(len(frames))]
            return PairSample(frame, frame, same_person=True, identical=True)
        i, j = rng.choice(len(frames), size=2, replace=False)
        return PairSample(frames[i], frames[j], same_person=True, identical=False)
    if len(keys) < 2:
        raise EmptyDataset("cross-identity sampling needs at least 2 persons")
    a, b = rng.choice(len(keys), size=2, replace=False)
    src = dataset.persons[keys[a]]
    tgt = dataset.persons[keys[b]]
    return PairSample(
        src[rng.integers(len(src))],
        tgt[rng.integers(len(tgt))],
        same_person=False,
        identical=False,
    )


class Trainer:
    """Owns the optimizers and implements the alternating update step."""

    def __init__(
        self,
        swapper: FaceSwapper,
        config: TrainConfig,
        weights: LossWeights,
        eye_margin: float = 4.0,
        eye_patch_size: int = 16,
        eye_extractor=None,
    ):
        if not isinstance(swapper.identity_encoder, nn.Module):
            raise ValueError("training needs a differentiable identity encoder")
        self.swapper = swapper
        self.config = config
        self.weights = weights
        self.eye_margin = eye_margin
        self.eye_patch_size = eye_patch_size
        self.eye_extractor = eye_extractor
        self.g_opt = torch.optim.Adam(
            list(swapper.generator_parameters()),
            lr=config.lr_generator,
            betas=(config.beta1, config.beta2),
        )
        self.d_opt = torch.optim.Adam(
            list(swapper.discriminator_parameters()),
            lr=config.lr_discriminator,
            betas=(config.beta1, config.beta2),
        )

    def step(self, batch: list[PairSample]) -> LossReport:
        """One discriminator update then one generator update.

        Raises :class:`NonFiniteLoss` and restores all parameters if any
        loss comes out non-finite.
        """
        if not batch:
            raise ValueError("batch must be non-empty")
        swapper = self.swapper
        snapshot = swapper.state_dicts()
        snapshot = {
            name: {k: v.detach().clone() for k, v in state.items()}
            for name, state in snapshot.items()
        }
        try:
            x_s = to_batch([p.x_s.crop for p in batch])
            x_t = to_batch([p.x_t.crop for p in batch])
            flags = [p.same_person for p in batch]

            z_id = swapper.encode_identity(x_s)
            stack_t = swapper.extract_attributes(x_t)
            y = swapper.generate(z_id, stack_t)

            real = swapper.discriminate(x_t)
            fake_detached = swapper.discriminate(y.detach())
            _, d_loss = adversarial_losses(real, fake_detached)
            if not torch.isfinite(d_loss):
                raise NonFiniteLoss(f"discriminator loss {d_loss.item()}")
            self.d_opt.zero_grad()
            d_loss.backward()
            self.d_opt.step()

            real_detached = RealismScores([m.detach() for m in real.maps])
            fake = swapper.discriminate(y)
            g_adv, _ = adversarial_losses(real_detached, fake)

            z_gen = swapper.encode_identity(y)
            l_id = identity_loss(z_gen, z_id.detach())

            stack_gen = swapper.extract_attributes(y)
            stack_t_detached = stack_t.detach()
            l_att = attribute_loss(stack_gen, stack_t_detached)

            l_rec = y.new_zeros(())
            l_eye = y.new_zeros(())
            for i, pair in enumerate(batch):
                l_rec = l_rec + reconstruction_loss(y[i], x_t[i], flags[i])
                if pair.x_t.landmarks is not None:
                    l_eye = l_eye + eye_loss(
                        y[i],
                        x_t[i],
                        pair.x_t.landmarks,
                        margin=self.eye_margin,
                        extractor=self.eye_extractor,
                        patch_size=self.eye_patch_size,
                    )
            l_rec = l_rec / len(batch)
            l_eye = l_eye / len(batch)

            terms = {"id": l_id, "adv": g_adv, "rec": l_rec, "att": l_att, "eye": l_eye}
            g_total = weighted_total(terms, self.weights)
            if not torch.isfinite(g_total):
                raise NonFiniteLoss(f"generator loss {g_total.item()}")
            self.g_opt.zero_grad()
            g_total.backward()
            self.g_opt.step()

            for param in list(swapper.generator_parameters()) + list(
                swapper.discriminator_parameters()
            ):
                if not torch.isfinite(param).all():
                    raise NonFiniteLoss("non-finite parameter after update")
        except NonFiniteLoss:
            swapper.load_state_dicts(snapshot)
            raise

        return total_loss(
            {k: float(v.detach()) for k, v in terms.items()},
            self.weights,
            same_person=any(flags),
        )


@dataclass
class TrainResult:
    checkpoint_path: str
    log_path: str
    steps: int
    reports: list[LossReport]


def train(
    swapper: FaceSwapper,
    dataset: Dataset,
    config: TrainConfig,
    weights: LossWeights,
    out_dir,
    eye_margin: float = 4.0,
    eye_patch_size: int = 16,
    eye_extractor=None,
) -> TrainResult:
    """Run ``epochs * ceil(frames / batch)`` steps with periodic checkpoints.

    Emits one CSV log row per completed step.  A step whose loss is
    non-finite is aborted (parameters untouched); three consecutive aborts
    propagate :class:`NonFiniteLoss`.
    """
    out_dir = os.fspath(out_dir)
    os.makedirs(out_dir, exist_ok=True)
    checkpoint_path = os.path.join(out_dir, "checkpoint.pt")
    log_path = os.path.join(out_dir, "training_log.csv")

    torch.manual_seed(config.seed)
    rng = np.random.default_rng(config.seed)
    trainer = Trainer(
        swapper,
        config,
        weights,
        eye_margin=eye_margin,
        eye_patch_size=eye_patch_size,
        eye_extractor=eye_extractor,
    )
    steps_per_epoch = math.ceil(dataset.total_frames / config.batch_size)
    total_steps = config.epochs * steps_per_epoch

    save_checkpoint(checkpoint_path, swapper, step=0)
    reports: list[LossReport] = []
    consecutive_failures = 0
    with open(log_path, "w", encoding="utf-8") as log:
        log.write(LOG_HEADER + "\n")
        for step in range(1, total_steps + 1):
            batch = [sample_pair(dataset, config, rng) for _ in range(config.batch_size)]
            try:
                report = trainer.step(batch)
            except NonFiniteLoss:
                consecutive_failures += 1
                if consecutive_failures >= 3:
                    raise
                continue
            consecutive_failures = 0
            reports.append(report)
            log.write(
                f"{step},{report.l_id!r},{report.l_adv!r},{report.l_rec!r},"
                f"{report.l_att!r},{report.l_eye!r},{report.total!r},"
                f"{int(report.same_person_flag)}\n"
            )
            if step % config.checkpoint_every == 0:
                save_checkpoint(checkpoint_path, swapper, step=step)
    save_checkpoint(checkpoint_path, swapper, step=total_steps)
    return TrainResult(checkpoint_path, log_path, total_steps, reports)


def read_training_log(path) -> list[dict]:
    """Parse the CSV produced by :func:`train`."""
    rows = []
    with open(path, "r", encoding="utf-8") as fh:
        header = fh.readline().strip().split(",")
        for line in fh:
            parts = line.strip().split(",")
            if len(parts) != len(header):
                continue
            row = dict(zip(header, parts))
            rows.append(
                {
                    "step": int(row["step"]),
                    "l_id": float(row["l_id"]),
                    "l_adv": float(row["l_adv"]),
                    "l_rec": float(row["l_rec"]),
                    "l_att": float(row["l_att"]),
                    "l_eye": float(row["l_eye"]),
                    "total": float(row["total"]),
                    "same_flag": bool(int(row["same_flag"])),
                }
            )
    return rows
