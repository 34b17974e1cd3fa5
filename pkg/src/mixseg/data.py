"""Dataset ingestion: images/, masks/ and optional depths/ paired by stem.

A split file lists sample ids (file stems), one per line. Depth for each
sample is resolved by precedence: a file under depths/ first, then a
configured external command, then the luminance stub.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import tensor as T
from .depth import DepthMap, load_depth, stub_depth
from .imgio import IMAGE_EXTENSIONS, load_image_rgb, load_mask

DEPTH_EXTENSIONS = (".png", ".dpt")


class DatasetError(ValueError):
    """Dataset layout or pairing problem; the message lists offending ids."""


@dataclass
class Sample:
    id: str
    image: np.ndarray   # (3,H,W) float64 in [0,1]
    mask: np.ndarray    # (1,H,W) float64 in {0,1}
    depth: DepthMap


def read_split(path) -> list[str]:
    ids = []
    for line in Path(path).read_text().splitlines():
        body = line.split("#", 1)[0].strip()
        if body:
            ids.append(body)
    if not ids:
        raise DatasetError(f"split file {path} lists no ids")
    return ids


def _find_file(directory: Path, stem: str, extensions) -> Path | None:
    for ext in extensions:
        candidate = directory / f"{stem}{ext}"
        if candidate.is_file():
            return candidate
    return None


def _resize_map(arr: np.ndarray, h: int, w: int) -> np.ndarray:
    return T.bilinear_resize(T.Tensor(arr), h, w).data


def load_dataset(root_dir, split_file, *, external_depth=None,
                 allow_depth_resize: bool = False) -> list[Sample]:
    """Load the samples named by a split file.

    Missing images or masks are collected and reported together as a hard
    error. A depth map whose size differs from its image is rejected unless
    ``allow_depth_resize`` explicitly opts into a bilinear resize.
    """
    root = Path(root_dir)
    images_dir = root / "images"
    masks_dir = root / "masks"
    depths_dir = root / "depths"
    ids = read_split(split_file)

    missing: list[str] = []
    located: list[tuple[str, Path, Path]] = []
    for sid in ids:
        image_path = _find_file(images_dir, sid, IMAGE_EXTENSIONS)
        mask_path = _find_file(masks_dir, sid, IMAGE_EXTENSIONS)
        if image_path is None:
            missing.append(f"{sid} (image)")
        if mask_path is None:
            missing.append(f"{sid} (mask)")
        if image_path is not None and mask_path is not None:
            located.append((sid, image_path, mask_path))
    if missing:
        raise DatasetError("missing dataset files for ids: " + ", ".join(missing))

    samples: list[Sample] = []
    for sid, image_path, mask_path in located:
        image = load_image_rgb(image_path)
        mask = load_mask(mask_path)
        if image.shape[1:] != mask.shape[1:]:
            raise DatasetError(f"{sid}: image {image.shape[1:]} and mask "
                               f"{mask.shape[1:]} sizes differ")
        depth_path = _find_file(depths_dir, sid, DEPTH_EXTENSIONS)
        if depth_path is not None:
            dmap = load_depth(depth_path)
        elif external_depth is not None:
            dmap = external_depth(image_path)
        else:
            dmap = stub_depth(image)
        if dmap.shape != image.shape[1:]:
            if not allow_depth_resize:
                raise DatasetError(
                    f"{sid}: depth {dmap.shape} does not match image "
                    f"{image.shape[1:]}; pass allow_depth_resize to resize")
            resized = _resize_map(dmap.values, image.shape[1], image.shape[2])
            dmap = DepthMap(values=resized, source=dmap.source)
        samples.append(Sample(id=sid, image=image, mask=mask, depth=dmap))
    return samples
