"""Pipeline configuration: one structured file drives every stage.

The YAML file mirrors the nested dataclasses; any omitted field keeps its
default, so a config file only needs the values it overrides.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field, fields, replace

import yaml

from .blending import BlendConfig
from .geometry import FACE_OUTLINE, LEFT_EYE, RIGHT_EYE
from .losses import LossWeights
from .network.config import GeneratorConfig
from .training import TrainConfig

IDENTITY_EMBEDDERS = ("conv", "toy", "file")
LANDMARK_PROVIDERS = ("synthetic", "file")
SEGMENTATION_PROVIDERS = ("outline", "file")
POST_PROCESSORS = ("identity", "bicubic2x")
EYE_EXTRACTORS = ("pixels",)


@dataclass(frozen=True)
class EyeLossConfig:
    """Settings for the eye loss: box margin, patch size, extractor choice."""

    margin: float = 4.0
    patch_size: int = 16
    extractor: str = "pixels"

    def __post_init__(self):
        if self.margin < 0:
            raise ValueError("eye margin must be >= 0")
        if self.patch_size < 1:
            raise ValueError("eye patch_size must be >= 1")
        if self.extractor not in EYE_EXTRACTORS:
            raise ValueError(f"eye extractor must be one of {EYE_EXTRACTORS}")


@dataclass(frozen=True)
class LandmarkLayout:
    """Index groups for the landmark files this pipeline consumes.

    The default layout is the nine-point synthetic scheme: pupils, nose tip,
    mouth corners, then four outline extremes.  ``alignment`` lists the five
    points matched against the canonical template.
    """

    left_eye: tuple[int, ...] = (0,)
    right_eye: tuple[int, ...] = (1,)
    face_outline: tuple[int, ...] = (5, 6, 7, 8)
    alignment: tuple[int, ...] = (0, 1, 2, 3, 4)

    def __post_init__(self):
        for name in ("left_eye", "right_eye", "face_outline", "alignment"):
            object.__setattr__(self, name, tuple(int(i) for i in getattr(self, name)))
        if not self.left_eye or not self.right_eye:
            raise ValueError("eye groups must be non-empty")
        if len(self.face_outline) < 2:
            raise ValueError("face_outline needs at least 2 points")
        if len(self.alignment) < 3:
            raise ValueError("alignment needs at least 3 points")

    def index_groups(self) -> dict[str, tuple[int, ...]]:
        return {
            LEFT_EYE: self.left_eye,
            RIGHT_EYE: self.right_eye,
            FACE_OUTLINE: self.face_outline,
        }


@dataclass(frozen=True)
class PipelineConfig:
    """Everything the CLI and pipelines need, in one place."""

    generator: GeneratorConfig = field(default_factory=GeneratorConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    loss_weights: LossWeights = field(default_factory=LossWeights)
    blend: BlendConfig | None = None
    eye: EyeLossConfig = field(default_factory=EyeLossConfig)
    landmarks: LandmarkLayout = field(default_factory=LandmarkLayout)
    identity_embedder: str = "conv"
    embedder_path: str | None = None
    landmark_provider: str = "synthetic"
    segmentation_provider: str = "outline"
    post_processor: str = "identity"
    video_workers: int = 2
    seed: int = 0

    def __post_init__(self):
        if self.blend is None:
            object.__setattr__(
                self, "blend", BlendConfig.for_crop_size(self.generator.crop_size)
            )
        if self.identity_embedder not in IDENTITY_EMBEDDERS:
            raise ValueError(f"identity_embedder must be one of {IDENTITY_EMBEDDERS}")
        if self.identity_embedder == "file" and not self.embedder_path:
            raise ValueError("file embedder needs embedder_path")
        if self.landmark_provider not in LANDMARK_PROVIDERS:
            raise ValueError(f"landmark_provider must be one of {LANDMARK_PROVIDERS}")
        if self.segmentation_provider not in SEGMENTATION_PROVIDERS:
            raise ValueError(
                f"segmentation_provider must be one of {SEGMENTATION_PROVIDERS}"
            )
        if self.post_processor not in POST_PROCESSORS:
            raise ValueError(f"post_processor must be one of {POST_PROCESSORS}")
        if self.video_workers < 1:
            raise ValueError("video_workers must be >= 1")

    def with_seed(self, seed: int) -> "PipelineConfig":
        return replace(self, seed=seed, train=replace(self.train, seed=seed))


_SECTIONS = {
    "generator": GeneratorConfig,
    "train": TrainConfig,
    "loss_weights": LossWeights,
    "blend": BlendConfig,
    "eye": EyeLossConfig,
    "landmarks": LandmarkLayout,
}


def _listify(value):
    if isinstance(value, dict):
        return {k: _listify(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_listify(v) for v in value]
    return value


def config_to_dict(config: PipelineConfig) -> dict:
    out = asdict(config)
    for name in _SECTIONS:
        section = getattr(config, name)
        out[name] = asdict(section) if section is not None else None
    return _listify(out)


def config_from_dict(data: dict) -> PipelineConfig:
    data = dict(data or {})
    kwargs = {}
    for name, cls in _SECTIONS.items():
        if name in data and data[name] is not None:
            section = data.pop(name)
            known = {f.name for f in fields(cls)}
            unknown = set(section) - known
            if unknown:
                raise ValueError(f"unknown keys in section {name!r}: {sorted(unknown)}")
            kwargs[name] = cls(**section)
        else:
            data.pop(name, None)
    known_top = {f.name for f in fields(PipelineConfig)}
    unknown_top = set(data) - known_top
    if unknown_top:
        raise ValueError(f"unknown config keys: {sorted(unknown_top)}")
    kwargs.update(data)
    return PipelineConfig(**kwargs)


def load_config(path) -> PipelineConfig:
    with open(path, "r", encoding="utf-8") as fh:
        data = yaml.safe_load(fh)
    return config_from_dict(data or {})


def save_config(path, config: PipelineConfig) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        yaml.safe_dump(config_to_dict(config), fh, sort_keys=False)
