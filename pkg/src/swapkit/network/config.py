"""Generator architecture configuration."""

from __future__ import annotations

from dataclasses import dataclass

ENCODER_VARIANTS = ("unet", "linknet", "resnet")

_MAX_WIDTH_FACTOR = 8  # channel widths cap at base_channels * 8


@dataclass(frozen=True)
class GeneratorConfig:
    """Shapes shared by the attribute encoder, generator and checkpoints.

    ``crop_size`` must be a power of two and ``n_levels`` at most
    log2(crop_size) - 1, so the coarsest feature map is at least 2x2.
    """

    crop_size: int = 64
    identity_dim: int = 64
    n_levels: int = 3
    base_channels: int = 16
    aad_blocks_per_level: int = 2
    encoder_variant: str = "unet"

    def __post_init__(self):
        s = self.crop_size
        if s < 4 or s & (s - 1) != 0:
            raise ValueError(f"crop_size must be a power of two >= 4, got {s}")
        if self.n_levels < 1 or (1 << (self.n_levels + 1)) > s:
            raise ValueError(
                f"n_levels must be in [1, log2(crop_size)-1], got {self.n_levels}"
            )
        if self.identity_dim < 1:
            raise ValueError("identity_dim must be >= 1")
        if self.base_channels < 1:
            raise ValueError("base_channels must be >= 1")
        if self.aad_blocks_per_level < 1:
            raise ValueError("aad_blocks_per_level must be >= 1")
        if self.encoder_variant not in ENCODER_VARIANTS:
            raise ValueError(f"encoder_variant must be one of {ENCODER_VARIANTS}")


def encoder_channels(config: GeneratorConfig) -> list[int]:
    """Channel width after each stride-2 encoder stage, finest first."""
    cap = config.base_channels * _MAX_WIDTH_FACTOR
    return [min(config.base_channels * (1 << i), cap) for i in range(config.n_levels)]


def attribute_channels(config: GeneratorConfig) -> list[int]:
    """Channel widths of the attribute stack, coarsest level first."""
    return encoder_channels(config)[::-1]


def attribute_sizes(config: GeneratorConfig) -> list[int]:
    """Spatial sizes of the attribute stack, coarsest level first."""
    return [config.crop_size >> (config.n_levels - i) for i in range(config.n_levels)]
