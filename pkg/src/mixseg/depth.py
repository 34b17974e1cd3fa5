"""Depth-prior sources: files on disk, an external command, or stubs.

The depth estimator itself is an external tool; this module only supplies
a (1,H,W) map in [0,1] per image. Every map is min-max normalized per
image; a constant raw map normalizes to all zeros. Supported file formats:

- single-channel PNG, 8-bit or 16-bit;
- raw float32 "DPT1": magic ``DPT1`` (4 bytes), u32 little-endian height,
  u32 little-endian width, then H*W float32 little-endian values in
  row-major order.

Files are sniffed by content, not extension.
"""

from __future__ import annotations

import hashlib
import shlex
import struct
import subprocess
import tempfile
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image

DPT1_MAGIC = b"DPT1"
_PNG_MAGIC = b"\x89PNG\r\n\x1a\n"

LUMA_WEIGHTS = (0.299, 0.587, 0.114)


class DepthFormatError(ValueError):
    """A depth file exists but cannot be decoded."""


class ExternalDepthError(RuntimeError):
    """The external depth command failed; carries captured diagnostics."""


@dataclass(frozen=True)
class DepthMap:
    """Normalized per-image depth prior. source is one of
    file | external | stub | zero."""

    values: np.ndarray  # (1,H,W) float64 in [0,1]
    source: str

    @property
    def shape(self) -> tuple[int, int]:
        return self.values.shape[1], self.values.shape[2]


def normalize_depth(raw: np.ndarray, source: str) -> DepthMap:
    """Min-max normalize to [0,1]; zero-dynamic-range input maps to zeros."""
    arr = np.asarray(raw, dtype=np.float64)
    if arr.ndim != 2:
        raise DepthFormatError(f"depth map must be single-channel, got {arr.shape}")
    lo = float(arr.min())
    hi = float(arr.max())
    if hi > lo:
        arr = (arr - lo) / (hi - lo)
    else:
        arr = np.zeros_like(arr)
    return DepthMap(values=arr[None], source=source)


def _load_dpt1(data: bytes, path) -> np.ndarray:
    if len(data) < 12:
        raise DepthFormatError(f"{path}: truncated DPT1 header")
    h, w = struct.unpack_from("<II", data, 4)
    expected = 12 + 4 * h * w
    if len(data) != expected:
        raise DepthFormatError(f"{path}: DPT1 payload is {len(data) - 12} bytes, "
                               f"expected {4 * h * w} for {h}x{w}")
    return np.frombuffer(data, dtype="<f4", offset=12).reshape(h, w).astype(np.float64)


def _load_depth_png(path) -> np.ndarray:
    with Image.open(path) as im:
        if im.mode == "L":
            return np.asarray(im, dtype=np.float64)
        if im.mode in ("I;16", "I;16B", "I"):
            return np.asarray(im, dtype=np.float64)
        raise DepthFormatError(f"{path}: unsupported depth PNG mode {im.mode!r} "
                               "(need single-channel 8- or 16-bit)")


def load_depth(path) -> DepthMap:
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"depth file not found: {path}")
    head = path.open("rb").read(8)
    if head.startswith(DPT1_MAGIC):
        return normalize_depth(_load_dpt1(path.read_bytes(), path), "file")
    if head.startswith(_PNG_MAGIC):
        return normalize_depth(_load_depth_png(path), "file")
    raise DepthFormatError(f"{path}: neither a PNG nor a DPT1 file")


def save_dpt1(path, values: np.ndarray) -> None:
    arr = np.asarray(values, dtype=np.float32)
    if arr.ndim == 3 and arr.shape[0] == 1:
        arr = arr[0]
    if arr.ndim != 2:
        raise ValueError(f"expected a single-channel map, got {arr.shape}")
    h, w = arr.shape
    with open(path, "wb") as fh:
        fh.write(DPT1_MAGIC)
        fh.write(struct.pack("<II", h, w))
        fh.write(arr.astype("<f4").tobytes())


def stub_depth(image: np.ndarray) -> DepthMap:
    """Luminance of the RGB image as a stand-in depth prior."""
    arr = np.asarray(image, dtype=np.float64)
    if arr.ndim != 3 or arr.shape[0] != 3:
        raise ValueError(f"stub_depth needs a (3,H,W) image, got {arr.shape}")
    luma = sum(wt * arr[i] for i, wt in enumerate(LUMA_WEIGHTS))
    return normalize_depth(luma, "stub")


def zero_depth(h: int, w: int) -> DepthMap:
    """All-zero prior: the depth-free ablation input."""
    return DepthMap(values=np.zeros((1, h, w)), source="zero")


def replicate3(d: DepthMap) -> np.ndarray:
    """Stack the single depth channel three times into a (3,H,W) array."""
    return np.repeat(d.values, 3, axis=0)


def _with_source(d: DepthMap, source: str) -> DepthMap:
    return DepthMap(values=d.values, source=source)


class ExternalDepthSource:
    """Runs an external depth tool per image, with content-hash caching.

    The command template must contain ``{in}`` and ``{out}`` placeholders;
    it is split with shlex and run without a shell. The tool must write a
    loadable depth file (PNG or DPT1) to the ``{out}`` path.
    """

    def __init__(self, command_template: str, timeout: float = 120.0):
        if "{in}" not in command_template or "{out}" not in command_template:
            raise ValueError("command template must contain {in} and {out}")
        self.template = command_template
        self.timeout = float(timeout)
        self.launches = 0
        self._cache: dict[str, DepthMap] = {}

    def _key(self, image_path: Path) -> str:
        return hashlib.sha256(image_path.read_bytes()).hexdigest()

    def render_to(self, image_path, out_path) -> DepthMap:
        """Run the tool for one image, writing its output to out_path."""
        image_path = Path(image_path)
        out_path = Path(out_path)
        argv = [part.replace("{in}", str(image_path)).replace("{out}", str(out_path))
                for part in shlex.split(self.template)]
        self.launches += 1
        try:
            proc = subprocess.run(argv, capture_output=True, text=True,
                                  timeout=self.timeout)
        except subprocess.TimeoutExpired as exc:
            raise ExternalDepthError(
                f"depth command timed out after {self.timeout}s: {argv}") from exc
        if proc.returncode != 0:
            raise ExternalDepthError(
                f"depth command failed with status {proc.returncode}: {argv}\n"
                f"stdout: {proc.stdout.strip()}\nstderr: {proc.stderr.strip()}")
        if not out_path.is_file():
            raise ExternalDepthError(
                f"depth command exited 0 but wrote no output file: {out_path}")
        loaded = load_depth(out_path)
        return _with_source(loaded, "external")

    def __call__(self, image_path) -> DepthMap:
        image_path = Path(image_path)
        key = self._key(image_path)
        if key in self._cache:
            return self._cache[key]
        with tempfile.TemporaryDirectory(prefix="mixseg-depth-") as tmp:
            out = Path(tmp) / "depth.png"
            result = self.render_to(image_path, out)
        self._cache[key] = result
        return result


def external_depth(command_template: str, image_path,
                   timeout: float = 120.0) -> DepthMap:
    """One-shot external depth computation (no cross-call caching)."""
    return ExternalDepthSource(command_template, timeout=timeout)(image_path)
