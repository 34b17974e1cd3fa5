"""Central finite-difference gradient checking.

Relative error convention: |analytic - numeric| / max(|analytic|,
|numeric|, 1), reduced with max over all elements of all checked leaves.
"""

from __future__ import annotations

import numpy as np

from mixseg.tensor import backward


def finite_diff(build_loss, tensors, h=1e-4):
    grads = []
    for t in tensors:
        flat = t.data.ravel()
        out = np.zeros(flat.size)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + h
            fp = build_loss().item()
            flat[i] = orig - h
            fm = build_loss().item()
            flat[i] = orig
            out[i] = (fp - fm) / (2.0 * h)
        grads.append(out.reshape(t.data.shape))
    return grads


def max_rel_error(build_loss, tensors, h=1e-4):
    """Max relative disagreement between backward() and central differences."""
    loss = build_loss()
    backward(loss)
    analytic = [np.zeros_like(t.data) if t.grad is None else t.grad.copy()
                for t in tensors]
    numeric = finite_diff(build_loss, tensors, h)
    worst = 0.0
    for a, n in zip(analytic, numeric):
        denom = np.maximum(np.maximum(np.abs(a), np.abs(n)), 1.0)
        worst = max(worst, float((np.abs(a - n) / denom).max()))
    return worst
