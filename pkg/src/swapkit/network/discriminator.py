"""Multi-scale patch discriminator with raw (hinge-compatible) scores."""

from __future__ import annotations

from dataclasses import dataclass

import torch
import torch.nn as nn
import torch.nn.functional as F

from ..errors import ShapeMismatch


@dataclass
class RealismScores:
    """One raw patch score map per discriminator scale."""

    maps: list[torch.Tensor]

    def __post_init__(self):
        if len(self.maps) < 1:
            raise ShapeMismatch("need at least one score map")


class _PatchDiscriminator(nn.Module):
    # SiLU instead of the conventional leaky ReLU: generator-side adversarial
    # gradients flow through these layers and must stay smooth.
    def __init__(self, base_channels: int, n_layers: int):
        super().__init__()
        layers = []
        c_prev = 3
        c = base_channels
        for i in range(n_layers):
            layers.append(nn.Conv2d(c_prev, c, 4, stride=2, padding=1))
            if i > 0:
                layers.append(nn.InstanceNorm2d(c))
            layers.append(nn.SiLU(inplace=True))
            c_prev = c
            c = min(c * 2, base_channels * 8)
        layers.append(nn.Conv2d(c_prev, 1, 3, padding=1))
        self.net = nn.Sequential(*layers)

    def forward(self, x):
        return self.net(x)


class MultiScalePatchDiscriminator(nn.Module):
    """Scores the image at progressively halved resolutions.

    Scale ``k`` sees the input average-pooled by 2**k, so an input of size S
    with ``n_layers`` stride-2 stages yields maps of S/2**(n_layers+k).
    """

    def __init__(self, base_channels: int = 32, n_scales: int = 2, n_layers: int = 3):
        super().__init__()
        if n_scales < 1:
            raise ValueError("n_scales must be >= 1")
        self.scales = nn.ModuleList(
            [_PatchDiscriminator(base_channels, n_layers) for _ in range(n_scales)]
        )
        self.base_channels = base_channels
        self.n_layers = n_layers

    def hyperparams(self) -> dict[str, int]:
        return {
            "base_channels": self.base_channels,
            "n_scales": len(self.scales),
            "n_layers": self.n_layers,
        }

    def forward(self, image: torch.Tensor) -> RealismScores:
        if image.dim() != 4 or image.shape[1] != 3:
            raise ShapeMismatch(f"expected (B, 3, H, W), got {tuple(image.shape)}")
        min_size = 1 << (self.n_layers + len(self.scales) - 1)
        if image.shape[-1] < min_size or image.shape[-2] < min_size:
            raise ShapeMismatch(
                f"input {tuple(image.shape[-2:])} too small for {len(self.scales)} scales"
            )
        maps = []
        x = image
        for i, scale in enumerate(self.scales):
            if i > 0:
                x = F.avg_pool2d(x, 2)
            maps.append(scale(x))
        return RealismScores(maps)
