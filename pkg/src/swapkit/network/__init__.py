"""Generator, encoders and discriminator for the face swap model."""

from .config import GeneratorConfig, attribute_channels, attribute_sizes
from .attribute import AttributeFeatureStack, UNetAttributeEncoder, build_attribute_encoder
from .generator import AADGenerator, AADLayer, AADResBlock
from .discriminator import MultiScalePatchDiscriminator, RealismScores
from .identity import (
    ConvIdentityEncoder,
    FileEmbedder,
    ToyEmbedder,
    build_identity_encoder,
    crop_key,
    save_embeddings,
)
from .models import FaceSwapper, build_models
from .checkpoint import load_checkpoint, restore_models, save_checkpoint

__all__ = [
    "GeneratorConfig",
    "attribute_channels",
    "attribute_sizes",
    "AttributeFeatureStack",
    "UNetAttributeEncoder",
    "build_attribute_encoder",
    "AADGenerator",
    "AADLayer",
    "AADResBlock",
    "MultiScalePatchDiscriminator",
    "RealismScores",
    "ConvIdentityEncoder",
    "ToyEmbedder",
    "FileEmbedder",
    "build_identity_encoder",
    "crop_key",
    "save_embeddings",
    "FaceSwapper",
    "build_models",
    "load_checkpoint",
    "restore_models",
    "save_checkpoint",
]
