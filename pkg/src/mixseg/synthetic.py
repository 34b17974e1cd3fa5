"""Synthetic blob datasets for desk-scale experiments and tests.

Two flavours:
- ``visible``: the blob is brighter than the background in RGB, so the
  mask is learnable from the image alone (overfitting demos).
- ``depth_only``: RGB is noise with identical statistics inside and
  outside the blob; only the depth file separates figure from ground
  (depth-ablation experiments).
"""

from __future__ import annotations

from pathlib import Path

import numpy as np
from PIL import Image

from .depth import save_dpt1
from .imgio import save_gray16_png


def _blob_mask(rng: np.random.Generator, size: int) -> np.ndarray:
    yy, xx = np.mgrid[0:size, 0:size]
    cy = rng.uniform(0.3, 0.7) * size
    cx = rng.uniform(0.3, 0.7) * size
    ry = rng.uniform(0.15, 0.3) * size
    rx = rng.uniform(0.15, 0.3) * size
    return ((yy - cy) ** 2 / ry ** 2 + (xx - cx) ** 2 / rx ** 2 <= 1.0)


def _save_rgb(path: Path, arr01: np.ndarray) -> None:
    byts = np.clip(np.round(arr01 * 255.0), 0, 255).astype(np.uint8)
    Image.fromarray(byts.transpose(1, 2, 0), mode="RGB").save(path)


def make_blob_dataset(root, n_images: int, size: int = 64, seed: int = 0,
                      style: str = "visible", depth_format: str = "png16",
                      write_depths: bool = True) -> Path:
    """Write images/, masks/, optional depths/ and a split file; returns
    the split file path."""
    if style not in ("visible", "depth_only"):
        raise ValueError(f"unknown style {style!r}")
    root = Path(root)
    for sub in ("images", "masks") + (("depths",) if write_depths else ()):
        (root / sub).mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(seed)
    ids = []
    for i in range(n_images):
        sid = f"blob{i:03d}"
        ids.append(sid)
        mask = _blob_mask(rng, size)
        noise = rng.uniform(0.0, 1.0, size=(3, size, size))
        if style == "visible":
            base = np.where(mask[None], 0.75, 0.25)
            image = np.clip(base + 0.2 * (noise - 0.5), 0.0, 1.0)
        else:
            image = noise
        _save_rgb(root / "images" / f"{sid}.png", image)
        mask_png = (mask * 255).astype(np.uint8)
        Image.fromarray(mask_png, mode="L").save(root / "masks" / f"{sid}.png")
        if write_depths:
            depth = mask.astype(np.float64) * 0.8 + 0.1
            depth += 0.05 * rng.standard_normal((size, size))
            depth = np.clip(depth, 0.0, 1.0)
            if depth_format == "png16":
                save_gray16_png(root / "depths" / f"{sid}.png",
                                np.round(depth * 65535).astype(np.uint16))
            elif depth_format == "dpt1":
                save_dpt1(root / "depths" / f"{sid}.dpt", depth)
            else:
                raise ValueError(f"unknown depth format {depth_format!r}")
    split = root / "all.txt"
    split.write_text("".join(f"{sid}\n" for sid in ids))
    return split
