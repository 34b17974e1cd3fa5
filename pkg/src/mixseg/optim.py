"""AdamW with decoupled weight decay.

Parameter and moment storage is float32 (the checkpoint payload dtype);
the update itself is computed in float64 so that resumed runs reproduce
uninterrupted ones bit for bit.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .config import TrainConfig
from .tensor import ShapeError


@dataclass
class OptState:
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)
    step: int = 0

    @classmethod
    def for_params(cls, params: dict[str, np.ndarray]) -> "OptState":
        return cls(m={k: np.zeros_like(a) for k, a in params.items()},
                   v={k: np.zeros_like(a) for k, a in params.items()},
                   step=0)


def adamw_step(params: dict[str, np.ndarray], grads: dict[str, np.ndarray],
               state: OptState, config: TrainConfig) -> None:
    """One decoupled-weight-decay Adam update, in place.

    m <- b1*m + (1-b1)*g ; v <- b2*v + (1-b2)*g^2 ; with bias-corrected
    mhat, vhat: p <- p - lr*(mhat/(sqrt(vhat)+eps) + wd*p). Weight decay is
    applied to every parameter unless ``decay_biases`` is off, in which
    case bias vectors (names ending in ".b") are exempt.
    """
    beta1, beta2 = config.betas
    state.step += 1
    t = state.step
    bc1 = 1.0 - beta1 ** t
    bc2 = 1.0 - beta2 ** t
    for name, p in params.items():
        g = np.asarray(grads[name], dtype=np.float64)
        if g.shape != p.shape:
            raise ShapeError(f"adamw_step: gradient {g.shape} does not match "
                             f"parameter {name} {p.shape}")
        m = state.m[name].astype(np.float64) * beta1 + (1.0 - beta1) * g
        v = state.v[name].astype(np.float64) * beta2 + (1.0 - beta2) * g * g
        mhat = m / bc1
        vhat = v / bc2
        wd = config.weight_decay
        if not config.decay_biases and name.endswith(".b"):
            wd = 0.0
        p64 = p.astype(np.float64)
        p64 -= config.lr * (mhat / (np.sqrt(vhat) + config.eps) + wd * p64)
        params[name] = p64.astype(np.float32)
        state.m[name] = m.astype(np.float32)
        state.v[name] = v.astype(np.float32)
