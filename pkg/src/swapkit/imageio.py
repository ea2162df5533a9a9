"""Image loading, saving and tensor conversion.

Images are H x W x 3 float64 arrays in [-1, 1] on the numpy side and
(B, 3, H, W) float tensors on the torch side.
"""

from __future__ import annotations

import numpy as np
import torch
from PIL import Image as PILImage

from .errors import IoFailure


def load_image(path) -> np.ndarray:
    try:
        with PILImage.open(path) as img:
            arr = np.asarray(img.convert("RGB"), dtype=np.float64)
    except OSError as exc:
        raise IoFailure(f"cannot read image {path}: {exc}") from exc
    return arr / 127.5 - 1.0


def save_image(path, image: np.ndarray) -> None:
    arr = np.asarray(image, dtype=np.float64)
    if arr.ndim == 2:
        arr = np.repeat(arr[..., None], 3, axis=2)
    quantized = np.round((np.clip(arr, -1.0, 1.0) + 1.0) * 127.5).astype(np.uint8)
    try:
        PILImage.fromarray(quantized, mode="RGB").save(path)
    except OSError as exc:
        raise IoFailure(f"cannot write image {path}: {exc}") from exc


def to_tensor(image: np.ndarray, dtype=torch.float32) -> torch.Tensor:
    arr = np.asarray(image, dtype=np.float64)
    if arr.ndim == 2:
        arr = arr[..., None]
    return torch.as_tensor(arr.transpose(2, 0, 1)).to(dtype)


def from_tensor(tensor: torch.Tensor) -> np.ndarray:
    if tensor.dim() != 3:
        raise ValueError(f"expected (C, H, W) tensor, got {tuple(tensor.shape)}")
    return tensor.detach().double().numpy().transpose(1, 2, 0)


def to_batch(images, dtype=torch.float32) -> torch.Tensor:
    return torch.stack([to_tensor(img, dtype) for img in images])
