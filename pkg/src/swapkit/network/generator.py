"""Adaptive attention denormalization blocks and the upsampling generator."""

from __future__ import annotations

import torch
import torch.nn as nn
import torch.nn.functional as F

from ..errors import ConfigMismatch, ShapeMismatch
from .attribute import AttributeFeatureStack, check_stack
from .config import GeneratorConfig, attribute_channels, attribute_sizes


class AADLayer(nn.Module):
    """Fuses identity and attribute conditioning through a learned gate.

    The normalized hidden state is denormalized twice: once with per-pixel
    scale/shift maps from the attribute features, once with global
    scale/shift vectors from the identity embedding.  A sigmoid gate computed
    from the hidden state mixes the two:  out = M * I + (1 - M) * A.

    ``mask_override`` (test hook) replaces the gate with a constant.
    """

    def __init__(self, h_channels: int, att_channels: int, id_dim: int):
        super().__init__()
        self.norm = nn.InstanceNorm2d(h_channels, affine=False)
        self.att_gamma = nn.Conv2d(att_channels, h_channels, 1)
        self.att_beta = nn.Conv2d(att_channels, h_channels, 1)
        self.id_gamma = nn.Linear(id_dim, h_channels)
        self.id_beta = nn.Linear(id_dim, h_channels)
        self.gate_conv = nn.Conv2d(h_channels, 1, 1)
        self.mask_override: float | None = None

    def branches(self, hidden, z_att, z_id):
        """Expose (attribute branch, identity branch, gate) for testing."""
        if hidden.shape[-2:] != z_att.shape[-2:]:
            raise ShapeMismatch(
                f"hidden {tuple(hidden.shape)} and z_att {tuple(z_att.shape)} differ spatially"
            )
        normed = self.norm(hidden)
        attr = self.att_gamma(z_att) * normed + self.att_beta(z_att)
        ident = (
            self.id_gamma(z_id)[:, :, None, None] * normed
            + self.id_beta(z_id)[:, :, None, None]
        )
        if self.mask_override is None:
            gate = torch.sigmoid(self.gate_conv(normed))
        else:
            gate = hidden.new_full((hidden.shape[0], 1, *hidden.shape[-2:]), self.mask_override)
        return attr, ident, gate

    def forward(self, hidden, z_att, z_id):
        attr, ident, gate = self.branches(hidden, z_att, z_id)
        return gate * ident + (1.0 - gate) * attr


class AADResBlock(nn.Module):
    """Residual block of two gated layers, with a gated shortcut on width change.

    Activations are SiLU: every path from inputs to output must be smooth
    enough for finite-difference gradient checks at 1e-3 steps.
    """

    def __init__(self, c_in: int, c_out: int, att_channels: int, id_dim: int):
        super().__init__()
        self.aad1 = AADLayer(c_in, att_channels, id_dim)
        self.conv1 = nn.Conv2d(c_in, c_in, 3, padding=1)
        self.aad2 = AADLayer(c_in, att_channels, id_dim)
        self.conv2 = nn.Conv2d(c_in, c_out, 3, padding=1)
        if c_in != c_out:
            self.aad_skip = AADLayer(c_in, att_channels, id_dim)
            self.conv_skip = nn.Conv2d(c_in, c_out, 3, padding=1)
        else:
            self.aad_skip = None
            self.conv_skip = None

    def forward(self, hidden, z_att, z_id):
        x = self.conv1(F.silu(self.aad1(hidden, z_att, z_id)))
        x = self.conv2(F.silu(self.aad2(x, z_att, z_id)))
        if self.aad_skip is not None:
            hidden = self.conv_skip(F.silu(self.aad_skip(hidden, z_att, z_id)))
        return x + hidden


class AADGenerator(nn.Module):
    """Decodes identity + attribute stack into a crop-sized image in [-1, 1].

    The identity vector seeds the coarsest map; each level runs
    ``aad_blocks_per_level`` residual blocks against the matching attribute
    level and upsamples by two, ending with a tanh head at full resolution.
    """

    def __init__(self, config: GeneratorConfig):
        super().__init__()
        self.config = config
        widths = attribute_channels(config)
        coarsest = attribute_sizes(config)[0]
        self.initial = nn.ConvTranspose2d(config.identity_dim, widths[0], coarsest)
        levels = []
        c_prev = widths[0]
        for i in range(config.n_levels):
            blocks = []
            for b in range(config.aad_blocks_per_level):
                c_out = widths[i] if b == config.aad_blocks_per_level - 1 else c_prev
                blocks.append(AADResBlock(c_prev, c_out, widths[i], config.identity_dim))
                c_prev = c_out
            levels.append(nn.ModuleList(blocks))
        self.levels = nn.ModuleList(levels)
        self.head = nn.Conv2d(c_prev, 3, 3, padding=1)

    def forward(self, z_id: torch.Tensor, stack: AttributeFeatureStack) -> torch.Tensor:
        check_stack(stack, self.config)
        if z_id.shape[-1] != self.config.identity_dim:
            raise ConfigMismatch(
                f"identity dim {z_id.shape[-1]} != config {self.config.identity_dim}"
            )
        h = self.initial(z_id[:, :, None, None])
        for i, blocks in enumerate(self.levels):
            for block in blocks:
                h = block(h, stack.levels[i], z_id)
            h = F.interpolate(h, scale_factor=2, mode="bilinear", align_corners=False)
        return torch.tanh(self.head(h))
