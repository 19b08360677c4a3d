"""PNG loading/saving helpers.

All in-memory images are float arrays in [0, 1]: color frames HxWx3 (RGB),
sketches HxW single channel.  Files are 8-bit PNG.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np
from PIL import Image

from .errors import ValidationError

FRAME_PATTERN = "*.png"


def load_color(path) -> np.ndarray:
    with Image.open(path) as img:
        arr = np.asarray(img.convert("RGB"), dtype=np.float32)
    return arr / 255.0


def load_sketch(path) -> np.ndarray:
    with Image.open(path) as img:
        arr = np.asarray(img.convert("L"), dtype=np.float32)
    return arr / 255.0


def _to_uint8(arr: np.ndarray) -> np.ndarray:
    return np.clip(np.rint(np.asarray(arr, dtype=np.float64) * 255.0), 0, 255).astype(np.uint8)


def save_color(path, arr: np.ndarray) -> None:
    if arr.ndim != 3 or arr.shape[2] != 3:
        raise ValidationError(f"color image must be HxWx3, got {arr.shape}")
    Image.fromarray(_to_uint8(arr), mode="RGB").save(path)


def save_sketch(path, arr: np.ndarray) -> None:
    if arr.ndim != 2:
        raise ValidationError(f"sketch must be HxW, got {arr.shape}")
    Image.fromarray(_to_uint8(arr), mode="L").save(path)


def list_frames(directory) -> list[Path]:
    """Sorted PNG frame paths of one clip directory."""
    directory = Path(directory)
    return sorted(p for p in directory.glob(FRAME_PATTERN) if p.is_file())
