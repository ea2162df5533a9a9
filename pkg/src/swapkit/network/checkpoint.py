"""Checkpoint archive: parameter tensors keyed by module plus embedded config."""

from __future__ import annotations

import os
from dataclasses import asdict

import torch

from ..errors import ConfigMismatch
from .config import GeneratorConfig

FORMAT_VERSION = 1


def save_checkpoint(path, swapper, step: int = 0) -> None:
    """Write atomically (temp file then rename)."""
    payload = {
        "format_version": FORMAT_VERSION,
        "generator_config": asdict(swapper.config),
        "discriminator_config": swapper.discriminator.hyperparams(),
        "embedder_kind": swapper.embedder_kind,
        "step": int(step),
        "models": swapper.state_dicts(),
    }
    path = os.fspath(path)
    tmp = path + ".tmp"
    torch.save(payload, tmp)
    os.replace(tmp, path)


def load_checkpoint(path, expected_config: GeneratorConfig | None = None):
    """Read a checkpoint payload dict.

    When ``expected_config`` is given, any mismatch raises
    :class:`ConfigMismatch` before any weights are loaded.
    """
    payload = torch.load(path, map_location="cpu", weights_only=True)
    if payload.get("format_version") != FORMAT_VERSION:
        raise ConfigMismatch(
            f"unsupported checkpoint format {payload.get('format_version')!r}"
        )
    config = GeneratorConfig(**payload["generator_config"])
    if expected_config is not None and config != expected_config:
        raise ConfigMismatch(
            f"checkpoint config {config} != expected {expected_config}"
        )
    payload["generator_config_obj"] = config
    return payload


def restore_models(path, embedder_path=None):
    """Rebuild a :class:`FaceSwapper` from a checkpoint file."""
    from .models import build_models

    payload = load_checkpoint(path)
    disc = payload["discriminator_config"]
    swapper = build_models(
        payload["generator_config_obj"],
        embedder=payload["embedder_kind"],
        embedder_path=embedder_path,
        disc_base_channels=disc["base_channels"],
        disc_scales=disc["n_scales"],
        disc_layers=disc["n_layers"],
    )
    swapper.load_state_dicts(payload["models"])
    return swapper, payload["step"]
