"""U-Net style attribute encoder producing the multi-resolution feature stack."""

from __future__ import annotations

from dataclasses import dataclass

import torch
import torch.nn as nn
import torch.nn.functional as F

from ..errors import ShapeMismatch
from .config import GeneratorConfig, attribute_channels, attribute_sizes, encoder_channels


@dataclass
class AttributeFeatureStack:
    """Ordered multi-resolution feature maps, coarsest first.

    Level ``i`` of ``n`` has spatial size ``crop_size / 2**(n-i)``; each map
    is a (B, C, H, W) tensor.
    """

    levels: list[torch.Tensor]

    def __post_init__(self):
        if len(self.levels) < 1:
            raise ShapeMismatch("attribute stack needs at least one level")
        for prev, cur in zip(self.levels, self.levels[1:]):
            if cur.shape[-1] != prev.shape[-1] * 2 or cur.shape[-2] != prev.shape[-2] * 2:
                raise ShapeMismatch(
                    f"levels must double in size: {prev.shape} then {cur.shape}"
                )

    def __len__(self) -> int:
        return len(self.levels)

    @property
    def spatial_sizes(self) -> list[int]:
        return [int(level.shape[-1]) for level in self.levels]

    def detach(self) -> "AttributeFeatureStack":
        return AttributeFeatureStack([level.detach() for level in self.levels])


def check_stack(stack: AttributeFeatureStack, config: GeneratorConfig) -> None:
    """Validate a stack against the config's size/width schedule."""
    if stack.spatial_sizes != attribute_sizes(config):
        raise ShapeMismatch(
            f"stack sizes {stack.spatial_sizes} != schedule {attribute_sizes(config)}"
        )
    widths = [int(level.shape[1]) for level in stack.levels]
    if widths != attribute_channels(config):
        raise ShapeMismatch(
            f"stack widths {widths} != schedule {attribute_channels(config)}"
        )


class _DownBlock(nn.Module):
    def __init__(self, c_in, c_out, normalize=True):
        super().__init__()
        layers = [nn.Conv2d(c_in, c_out, 4, stride=2, padding=1)]
        if normalize:
            layers.append(nn.InstanceNorm2d(c_out))
        layers.append(nn.SiLU(inplace=True))
        self.block = nn.Sequential(*layers)

    def forward(self, x):
        return self.block(x)


class _UpBlock(nn.Module):
    def __init__(self, c_in, c_skip, c_out):
        super().__init__()
        self.conv = nn.Conv2d(c_in + c_skip, c_out, 3, padding=1)
        self.norm = nn.InstanceNorm2d(c_out)

    def forward(self, x, skip):
        x = F.interpolate(x, scale_factor=2, mode="nearest")
        x = torch.cat([x, skip], dim=1)
        return F.silu(self.norm(self.conv(x)))


class UNetAttributeEncoder(nn.Module):
    """Encoder-decoder over the target crop; emits decoder-side maps.

    The stack's coarsest level is the bottleneck; finer levels come from the
    decoder and carry skip connections from the matching encoder stage.
    """

    def __init__(self, config: GeneratorConfig):
        super().__init__()
        self.config = config
        enc = encoder_channels(config)
        downs = []
        c_prev = 3
        for i, c in enumerate(enc):
            downs.append(_DownBlock(c_prev, c, normalize=i > 0))
            c_prev = c
        self.downs = nn.ModuleList(downs)
        ups = []
        for j in range(config.n_levels - 1, 0, -1):
            ups.append(_UpBlock(enc[j], enc[j - 1], enc[j - 1]))
        self.ups = nn.ModuleList(ups)

    def forward(self, x: torch.Tensor) -> AttributeFeatureStack:
        s = self.config.crop_size
        if x.dim() != 4 or x.shape[-2:] != (s, s):
            raise ShapeMismatch(f"expected (B, 3, {s}, {s}) input, got {tuple(x.shape)}")
        skips = []
        h = x
        for down in self.downs:
            h = down(h)
            skips.append(h)
        levels = [h]
        for j, up in enumerate(self.ups):
            skip = skips[self.config.n_levels - 2 - j]
            h = up(h, skip)
            levels.append(h)
        return AttributeFeatureStack(levels)


def build_attribute_encoder(config: GeneratorConfig) -> nn.Module:
    if config.encoder_variant == "unet":
        return UNetAttributeEncoder(config)
    raise NotImplementedError(
        f"attribute encoder variant {config.encoder_variant!r} is not available yet"
    )
