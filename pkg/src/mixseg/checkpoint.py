"""Checkpoint serialization.

Binary layout: magic ``M2XC`` (4 bytes) | u32 little-endian format version
| u32 little-endian header length | UTF-8 JSON header | float32
little-endian tensor payloads, concatenated in header directory order.

The JSON header holds the model configuration, step/epoch counters, the
training RNG state, and the tensor directory as [name, shape] pairs.
Tensor names are namespaced ``param/``, ``adam_m/``, ``adam_v/``. The
round trip is bit-exact because parameters and moments are stored as
float32 in memory as well as on disk.
"""

from __future__ import annotations

import dataclasses
import json
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .config import ModelConfig
from .model import Model
from .optim import OptState

MAGIC = b"M2XC"
VERSION = 1


class CheckpointError(ValueError):
    """Unreadable or inconsistent checkpoint file."""


@dataclass
class Checkpoint:
    model_config: ModelConfig
    params: dict[str, np.ndarray]
    opt: OptState
    epoch: int
    rng_state: dict | None
    version: int = VERSION

    def model(self) -> Model:
        return Model(config=self.model_config,
                     params={k: a.copy() for k, a in self.params.items()})


def save_checkpoint(path, ckpt: Checkpoint) -> None:
    tensors: list[tuple[str, np.ndarray]] = []
    for name, arr in ckpt.params.items():
        tensors.append((f"param/{name}", arr))
    for name, arr in ckpt.opt.m.items():
        tensors.append((f"adam_m/{name}", arr))
    for name, arr in ckpt.opt.v.items():
        tensors.append((f"adam_v/{name}", arr))
    header = {
        "model_config": dataclasses.asdict(ckpt.model_config),
        "step": ckpt.opt.step,
        "epoch": ckpt.epoch,
        "rng_state": ckpt.rng_state,
        "tensors": [[name, list(arr.shape)] for name, arr in tensors],
    }
    blob = json.dumps(header, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", ckpt.version))
        fh.write(struct.pack("<I", len(blob)))
        fh.write(blob)
        for _, arr in tensors:
            fh.write(np.ascontiguousarray(arr, dtype="<f4").tobytes())


def load_checkpoint(path) -> Checkpoint:
    data = Path(path).read_bytes()
    if len(data) < 12 or data[:4] != MAGIC:
        raise CheckpointError(f"{path}: bad magic (not a checkpoint file)")
    version, header_len = struct.unpack_from("<II", data, 4)
    if version != VERSION:
        raise CheckpointError(f"{path}: unknown format version {version}")
    if len(data) < 12 + header_len:
        raise CheckpointError(f"{path}: truncated header")
    try:
        header = json.loads(data[12:12 + header_len].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CheckpointError(f"{path}: corrupt header: {exc}") from exc

    offset = 12 + header_len
    arrays: dict[str, np.ndarray] = {}
    for name, shape in header["tensors"]:
        count = int(np.prod(shape)) if shape else 1
        nbytes = 4 * count
        if offset + nbytes > len(data):
            raise CheckpointError(f"{path}: truncated payload at tensor {name!r}")
        arr = np.frombuffer(data, dtype="<f4", count=count, offset=offset)
        arrays[name] = arr.reshape(shape).copy()
        offset += nbytes
    if offset != len(data):
        raise CheckpointError(f"{path}: {len(data) - offset} trailing bytes "
                              "after the last tensor")

    cfg_kw = dict(header["model_config"])
    if cfg_kw.get("head_taps") is not None:
        cfg_kw["head_taps"] = tuple(cfg_kw["head_taps"])
    model_config = ModelConfig(**cfg_kw)

    params = {name[len("param/"):]: arr for name, arr in arrays.items()
              if name.startswith("param/")}
    opt = OptState(
        m={name[len("adam_m/"):]: arr for name, arr in arrays.items()
           if name.startswith("adam_m/")},
        v={name[len("adam_v/"):]: arr for name, arr in arrays.items()
           if name.startswith("adam_v/")},
        step=int(header["step"]),
    )
    if set(params) != set(opt.m) or set(params) != set(opt.v):
        raise CheckpointError(f"{path}: tensor directory is inconsistent")
    return Checkpoint(model_config=model_config, params=params, opt=opt,
                      epoch=int(header["epoch"]), rng_state=header["rng_state"],
                      version=version)
