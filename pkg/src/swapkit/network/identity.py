"""Identity embedders: trainable encoder, frozen toy projection, file adapter.

All embedders map an aligned face crop to a unit-norm identity vector.  The
file adapter serves externally computed embeddings (e.g. from a pretrained
recognition model) keyed by crop content, so a full-scale embedding network
never has to live inside this package.
"""

from __future__ import annotations

import hashlib

import numpy as np
import torch
import torch.nn as nn
import torch.nn.functional as F

from ..errors import EmbeddingNotFound, ShapeMismatch


class ConvIdentityEncoder(nn.Module):
    """Small trainable convolutional embedder for desk-scale experiments."""

    def __init__(self, identity_dim: int = 64, base_channels: int = 32):
        super().__init__()
        c = base_channels
        # no norm layers: they choke on the 1x1 maps small crops produce, and
        # the embedding is L2-normalized at the output anyway
        self.features = nn.Sequential(
            nn.Conv2d(3, c, 4, stride=2, padding=1),
            nn.SiLU(inplace=True),
            nn.Conv2d(c, c * 2, 4, stride=2, padding=1),
            nn.SiLU(inplace=True),
            nn.Conv2d(c * 2, c * 4, 4, stride=2, padding=1),
            nn.SiLU(inplace=True),
        )
        self.fc = nn.Linear(c * 4, identity_dim)
        self.identity_dim = identity_dim

    def forward(self, crops: torch.Tensor) -> torch.Tensor:
        _check_crop_batch(crops)
        h = self.features(crops)
        h = F.adaptive_avg_pool2d(h, 1).flatten(1)
        return F.normalize(self.fc(h), dim=-1, eps=1e-12)


class ToyEmbedder(nn.Module):
    """Frozen deterministic embedder: pooled pixels through a fixed projection.

    The crop is average-pooled to ``pool_size`` x ``pool_size``, flattened,
    extended with a constant 1 (so the zero crop still embeds off-origin) and
    multiplied by a fixed Gaussian matrix seeded by ``seed``, then normalized.
    """

    def __init__(self, identity_dim: int = 64, pool_size: int = 8, seed: int = 1234):
        super().__init__()
        self.identity_dim = identity_dim
        self.pool_size = pool_size
        self.seed = seed
        n_features = 3 * pool_size * pool_size + 1
        rng = np.random.default_rng(seed)
        matrix = rng.standard_normal((identity_dim, n_features)) / np.sqrt(n_features)
        self.register_buffer("projection", torch.from_numpy(matrix).float())

    def forward(self, crops: torch.Tensor) -> torch.Tensor:
        _check_crop_batch(crops)
        pooled = F.adaptive_avg_pool2d(crops, self.pool_size).flatten(1)
        ones = pooled.new_ones(pooled.shape[0], 1)
        feats = torch.cat([pooled, ones], dim=1)
        proj = self.projection.to(feats.dtype)
        return F.normalize(feats @ proj.T, dim=-1, eps=1e-12)


class FileEmbedder:
    """Serves embeddings precomputed by an external tool.

    The archive maps content keys (see :func:`crop_key`) to vectors; lookups
    normalize defensively.  Raises :class:`EmbeddingNotFound` for unknown
    crops.
    """

    def __init__(self, path):
        data = np.load(path, allow_pickle=False)
        self._table = {str(k): np.asarray(data[k], dtype=np.float64) for k in data.files}
        if not self._table:
            raise ValueError(f"embedding archive {path} is empty")
        dims = {v.shape for v in self._table.values()}
        if len(dims) != 1:
            raise ValueError(f"inconsistent embedding shapes in archive: {dims}")
        self.identity_dim = next(iter(dims))[0]

    def embed(self, crop: np.ndarray) -> np.ndarray:
        key = crop_key(crop)
        if key not in self._table:
            raise EmbeddingNotFound(key)
        v = self._table[key]
        return v / max(np.linalg.norm(v), 1e-12)


def crop_key(crop: np.ndarray) -> str:
    """Content hash of a crop, stable across float round-trips via uint8."""
    arr = np.asarray(crop, dtype=np.float64)
    quantized = np.round((np.clip(arr, -1.0, 1.0) + 1.0) * 127.5).astype(np.uint8)
    digest = hashlib.sha256()
    digest.update(str(quantized.shape).encode())
    digest.update(quantized.tobytes())
    return digest.hexdigest()


def save_embeddings(path, table: dict[str, np.ndarray]) -> None:
    np.savez(path, **table)


def build_identity_encoder(kind: str, identity_dim: int, path=None):
    """Factory for the three embedder implementations."""
    if kind == "conv":
        return ConvIdentityEncoder(identity_dim)
    if kind == "toy":
        return ToyEmbedder(identity_dim)
    if kind == "file":
        if path is None:
            raise ValueError("file embedder needs an archive path")
        emb = FileEmbedder(path)
        if emb.identity_dim != identity_dim:
            raise ValueError(
                f"archive dim {emb.identity_dim} != configured {identity_dim}"
            )
        return emb
    raise ValueError(f"unknown identity embedder {kind!r}")


def _check_crop_batch(crops: torch.Tensor) -> None:
    if crops.dim() != 4 or crops.shape[1] != 3:
        raise ShapeMismatch(f"expected (B, 3, S, S) crops, got {tuple(crops.shape)}")
    if crops.shape[-1] != crops.shape[-2]:
        raise ShapeMismatch(f"crops must be square, got {tuple(crops.shape)}")
