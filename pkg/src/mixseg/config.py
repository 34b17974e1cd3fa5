"""Model and training hyperparameters plus the flat key=value config format."""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass
from pathlib import Path


class ConfigError(ValueError):
    """A configuration field failed validation; the message names the field."""


def _require(cond: bool, field: str, msg: str) -> None:
    if not cond:
        raise ConfigError(f"{field}: {msg}")


@dataclass(frozen=True)
class ModelConfig:
    """Architecture hyperparameters.

    trunk_width: channels of the fused trunk feature map.
    num_pairs: number of global/local block pairs in the trunk.
    mix_size: fixed square side used inside the global block's mixing stage.
    head_taps: trunk depths (1-based pair counts) where the four mask heads
        attach; defaults to N/4, N/2, 3N/4, N.
    """

    trunk_width: int = 12
    num_pairs: int = 32
    mix_size: int = 64
    input_kernel: int = 3
    conv3d_kernel: int = 3
    head_taps: tuple[int, int, int, int] | None = None
    seed: int = 0

    def __post_init__(self):
        _require(self.trunk_width >= 1, "trunk_width", "must be >= 1")
        _require(self.num_pairs >= 1, "num_pairs", "must be >= 1")
        _require(self.mix_size >= 2, "mix_size", "must be >= 2")
        _require(self.input_kernel >= 1 and self.input_kernel % 2 == 1,
                 "input_kernel", "must be odd and >= 1")
        _require(self.conv3d_kernel >= 1 and self.conv3d_kernel % 2 == 1,
                 "conv3d_kernel", "must be odd and >= 1")
        if self.head_taps is None:
            n = self.num_pairs
            taps = (n // 4, n // 2, 3 * n // 4, n)
            object.__setattr__(self, "head_taps", taps)
        else:
            object.__setattr__(self, "head_taps",
                               tuple(int(t) for t in self.head_taps))
        taps = self.head_taps
        _require(len(taps) == 4, "head_taps", "must list exactly four depths")
        _require(all(t >= 1 for t in taps), "head_taps",
                 f"depths must be >= 1, got {taps} (num_pairs too small for "
                 "the default placement?)")
        _require(all(a < b for a, b in zip(taps, taps[1:])), "head_taps",
                 f"must be strictly increasing, got {taps}")
        _require(taps[-1] == self.num_pairs, "head_taps",
                 f"last tap must equal num_pairs={self.num_pairs}, got {taps}")


@dataclass(frozen=True)
class TrainConfig:
    """Optimization recipe and ablation switches."""

    epochs: int = 200
    batch_size: int = 16
    lr: float = 1e-4
    weight_decay: float = 1e-4
    betas: tuple[float, float] = (0.9, 0.999)
    eps: float = 1e-8
    train_size: int = 352
    multiscale_factors: tuple[float, ...] = (0.75, 1.0, 1.25)
    seed: int = 0
    no_dam: bool = False
    no_multiscale: bool = False
    decay_biases: bool = True
    checkpoint_every: int = 0  # epochs between periodic checkpoints; 0 = final only

    def __post_init__(self):
        _require(self.epochs >= 1, "epochs", "must be >= 1")
        _require(self.batch_size >= 1, "batch_size", "must be >= 1")
        _require(self.lr > 0, "lr", "must be positive")
        _require(self.weight_decay >= 0, "weight_decay", "must be >= 0")
        object.__setattr__(self, "betas", tuple(float(b) for b in self.betas))
        _require(len(self.betas) == 2 and all(0 <= b < 1 for b in self.betas),
                 "betas", "must be two coefficients in [0, 1)")
        _require(self.eps > 0, "eps", "must be positive")
        _require(self.train_size >= 64, "train_size", "must be >= 64")
        object.__setattr__(self, "multiscale_factors",
                           tuple(float(f) for f in self.multiscale_factors))
        _require(len(self.multiscale_factors) >= 1, "multiscale_factors",
                 "must not be empty")
        _require(all(f > 0 for f in self.multiscale_factors),
                 "multiscale_factors", "must be positive")
        _require(list(self.multiscale_factors) == sorted(self.multiscale_factors),
                 "multiscale_factors", "must be sorted ascending")
        _require(self.checkpoint_every >= 0, "checkpoint_every", "must be >= 0")


_BOOL = {"true": True, "1": True, "yes": True,
         "false": False, "0": False, "no": False}


def _parse_value(field: dataclasses.Field, raw: str):
    ann = field.type
    if ann.startswith("bool"):
        low = raw.strip().lower()
        if low not in _BOOL:
            raise ConfigError(f"{field.name}: expected a boolean, got {raw!r}")
        return _BOOL[low]
    if ann.startswith("int"):
        return int(raw)
    if ann.startswith("float"):
        return float(raw)
    if ann.startswith("tuple[int"):
        return tuple(int(v) for v in raw.split(","))
    if ann.startswith("tuple[float"):
        return tuple(float(v) for v in raw.split(","))
    return raw


def parse_config_text(text: str) -> tuple[ModelConfig, TrainConfig]:
    """Parse flat ``key = value`` lines into the two config dataclasses.

    Keys match the dataclass field names exactly; '#' starts a comment;
    blank lines are ignored. Unknown keys are rejected.
    """
    model_fields = {f.name: f for f in dataclasses.fields(ModelConfig)}
    train_fields = {f.name: f for f in dataclasses.fields(TrainConfig)}
    # 'seed' exists on both; route it to both.
    model_kw: dict = {}
    train_kw: dict = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        body = line.split("#", 1)[0].strip()
        if not body:
            continue
        if "=" not in body:
            raise ConfigError(f"line {lineno}: expected key=value, got {line!r}")
        key, raw = (part.strip() for part in body.split("=", 1))
        hit = False
        if key in model_fields:
            model_kw[key] = _parse_value(model_fields[key], raw)
            hit = True
        if key in train_fields:
            train_kw[key] = _parse_value(train_fields[key], raw)
            hit = True
        if not hit:
            raise ConfigError(f"line {lineno}: unknown config key {key!r}")
    return ModelConfig(**model_kw), TrainConfig(**train_kw)


def load_config(path) -> tuple[ModelConfig, TrainConfig]:
    return parse_config_text(Path(path).read_text())
