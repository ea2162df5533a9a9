"""Bundle of the four networks plus tensor/numpy convenience entry points."""

from __future__ import annotations

import numpy as np
import torch
import torch.nn as nn

from ..errors import ShapeMismatch
from ..imageio import from_tensor, to_batch
from .attribute import AttributeFeatureStack, build_attribute_encoder
from .config import GeneratorConfig
from .discriminator import MultiScalePatchDiscriminator, RealismScores
from .generator import AADGenerator
from .identity import build_identity_encoder


class FaceSwapper:
    """Identity encoder, attribute encoder, generator and discriminator.

    Tensor methods expect (B, C, H, W) float tensors in [-1, 1]; the numpy
    helpers accept single H x W x 3 images.  Inference with frozen weights is
    safe to call concurrently; training updates must be serialized.
    """

    def __init__(
        self,
        config: GeneratorConfig,
        identity_encoder,
        attribute_encoder: nn.Module,
        generator: nn.Module,
        discriminator: nn.Module,
        embedder_kind: str = "conv",
    ):
        self.config = config
        self.identity_encoder = identity_encoder
        self.attribute_encoder = attribute_encoder
        self.generator = generator
        self.discriminator = discriminator
        self.embedder_kind = embedder_kind

    # -- tensor-level operations -------------------------------------------

    def encode_identity(self, crops: torch.Tensor) -> torch.Tensor:
        self._check_size(crops)
        if isinstance(self.identity_encoder, nn.Module):
            return self.identity_encoder(crops)
        vectors = [
            self.identity_encoder.embed(from_tensor(crop)) for crop in crops
        ]
        return torch.as_tensor(np.stack(vectors), dtype=crops.dtype)

    def extract_attributes(self, crops: torch.Tensor) -> AttributeFeatureStack:
        self._check_size(crops)
        return self.attribute_encoder(crops)

    def generate(self, z_id: torch.Tensor, stack: AttributeFeatureStack) -> torch.Tensor:
        return self.generator(z_id, stack)

    def discriminate(self, images: torch.Tensor) -> RealismScores:
        return self.discriminator(images)

    def swap(self, source_crops: torch.Tensor, target_crops: torch.Tensor) -> torch.Tensor:
        z_id = self.encode_identity(source_crops)
        stack = self.extract_attributes(target_crops)
        return self.generate(z_id, stack)

    # -- numpy conveniences ---------------------------------------------------

    def encode_identity_image(self, crop: np.ndarray) -> np.ndarray:
        if not isinstance(self.identity_encoder, nn.Module):
            return self.identity_encoder.embed(crop)
        with torch.no_grad():
            return self.encode_identity(to_batch([crop]))[0].double().numpy()

    def swap_image_crops(self, source_crop: np.ndarray, target_crop: np.ndarray) -> np.ndarray:
        with torch.no_grad():
            z_id = torch.as_tensor(
                self.encode_identity_image(source_crop), dtype=torch.float32
            )[None]
            stack = self.extract_attributes(to_batch([target_crop]))
            return from_tensor(self.generate(z_id, stack)[0])

    def generate_from_vector(self, z_id: np.ndarray, target_crop: np.ndarray) -> np.ndarray:
        with torch.no_grad():
            stack = self.extract_attributes(to_batch([target_crop]))
            z = torch.as_tensor(z_id, dtype=torch.float32)[None]
            return from_tensor(self.generate(z, stack)[0])

    # -- parameter management ---------------------------------------------

    def generator_modules(self) -> dict[str, nn.Module]:
        mods = {"attribute_encoder": self.attribute_encoder, "generator": self.generator}
        if isinstance(self.identity_encoder, nn.Module):
            mods["identity_encoder"] = self.identity_encoder
        return mods

    def generator_parameters(self):
        for module in self.generator_modules().values():
            yield from (p for p in module.parameters() if p.requires_grad)

    def discriminator_parameters(self):
        yield from self.discriminator.parameters()

    def all_modules(self) -> dict[str, nn.Module]:
        mods = dict(self.generator_modules())
        mods["discriminator"] = self.discriminator
        return mods

    def state_dicts(self) -> dict[str, dict]:
        return {name: mod.state_dict() for name, mod in self.all_modules().items()}

    def load_state_dicts(self, states: dict[str, dict]) -> None:
        for name, mod in self.all_modules().items():
            mod.load_state_dict(states[name])

    def train(self) -> "FaceSwapper":
        for mod in self.all_modules().values():
            mod.train()
        return self

    def eval(self) -> "FaceSwapper":
        for mod in self.all_modules().values():
            mod.eval()
        return self

    def _check_size(self, crops: torch.Tensor) -> None:
        s = self.config.crop_size
        if crops.dim() != 4 or crops.shape[-2:] != (s, s):
            raise ShapeMismatch(
                f"expected (B, 3, {s}, {s}) crops, got {tuple(crops.shape)}"
            )


def build_models(
    config: GeneratorConfig,
    embedder: str = "conv",
    seed: int | None = None,
    embedder_path=None,
    disc_base_channels: int = 32,
    disc_scales: int = 2,
    disc_layers: int = 3,
) -> FaceSwapper:
    """Construct all networks, optionally seeding initialization."""
    if seed is not None:
        torch.manual_seed(seed)
    identity_encoder = build_identity_encoder(embedder, config.identity_dim, embedder_path)
    attribute_encoder = build_attribute_encoder(config)
    generator = AADGenerator(config)
    discriminator = MultiScalePatchDiscriminator(
        base_channels=disc_base_channels, n_scales=disc_scales, n_layers=disc_layers
    )
    return FaceSwapper(
        config, identity_encoder, attribute_encoder, generator, discriminator, embedder
    )
