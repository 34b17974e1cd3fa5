"""PNG/JPEG loading and saving helpers (channel-first float arrays)."""

from __future__ import annotations

from pathlib import Path

import numpy as np
from PIL import Image

IMAGE_EXTENSIONS = (".png", ".jpg", ".jpeg", ".bmp")
MASK_THRESHOLD = 127  # 8-bit level; mask pixel is foreground when value > 127


def load_image_rgb(path) -> np.ndarray:
    """8-bit sRGB image as a (3,H,W) float64 array in [0,1]."""
    with Image.open(path) as im:
        arr = np.asarray(im.convert("RGB"), dtype=np.float64) / 255.0
    return np.ascontiguousarray(arr.transpose(2, 0, 1))


def load_mask(path) -> np.ndarray:
    """Binary mask as (1,H,W) float64 in {0,1}, thresholded at 127/255."""
    with Image.open(path) as im:
        arr = np.asarray(im.convert("L"))
    return (arr > MASK_THRESHOLD).astype(np.float64)[None]


def save_gray_png(path, values: np.ndarray) -> None:
    """Write a [0,1] map as an 8-bit grayscale PNG (value*255, rounded)."""
    arr = np.asarray(values, dtype=np.float64)
    if arr.ndim == 3 and arr.shape[0] == 1:
        arr = arr[0]
    if arr.ndim != 2:
        raise ValueError(f"expected a single-channel map, got shape {arr.shape}")
    byts = np.clip(np.round(arr * 255.0), 0, 255).astype(np.uint8)
    Image.fromarray(byts, mode="L").save(Path(path), format="PNG")


def save_gray16_png(path, values: np.ndarray) -> None:
    """Write a uint16 array as a 16-bit grayscale PNG."""
    arr = np.asarray(values)
    if arr.dtype != np.uint16 or arr.ndim != 2:
        raise ValueError("expected a 2-D uint16 array")
    Image.fromarray(arr).save(Path(path), format="PNG")
