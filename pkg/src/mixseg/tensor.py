"""Dense float64 tensors with reverse-mode automatic differentiation.

Layout convention: feature maps are channel-first ``(C, H, W)``; a batch
prepends a leading ``N`` axis. There is no implicit broadcasting: binary
operations require identical shapes and every shape adaptation (resize,
permute, unsqueeze, concat) is an explicit operation.

All operations are deterministic (fixed summation order per output
element) and produce finite outputs on finite inputs. Convolutions and
reductions accumulate in float64 throughout. Tensors are immutable from
the caller's perspective; a single backward pass is not re-entrant.
"""

from __future__ import annotations

import functools

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view


class ShapeError(ValueError):
    """Operand shapes violate an operation's contract."""


class GradientUnsupportedError(RuntimeError):
    """A non-differentiable operation received a grad-enabled input."""


class Tensor:
    """Float64 array plus optional participation in reverse-mode AD."""

    __slots__ = ("data", "requires_grad", "grad", "_vjps")

    def __init__(self, data, requires_grad: bool = False):
        self.data = np.asarray(data, dtype=np.float64)
        self.requires_grad = bool(requires_grad)
        self.grad: np.ndarray | None = None
        self._vjps: tuple = ()

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    def item(self) -> float:
        if self.data.size != 1:
            raise ShapeError(f"item() needs a scalar tensor, got shape {self.shape}")
        return float(self.data)

    def backward(self) -> dict["Tensor", np.ndarray]:
        return backward(self)

    def __add__(self, other):
        return add(self, other)

    def __sub__(self, other):
        return sub(self, other)

    def __mul__(self, other):
        return mul(self, other)

    def __repr__(self) -> str:
        flag = ", grad" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}{flag})"


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _result(data: np.ndarray, vjps) -> Tensor:
    """Wrap an op result; the graph edge list is kept only when needed."""
    out = Tensor.__new__(Tensor)
    out.data = data
    out.grad = None
    live = tuple((p, fn) for p, fn in vjps if p.requires_grad)
    out.requires_grad = bool(live)
    out._vjps = live
    return out


def _topo(root: Tensor) -> list[Tensor]:
    order: list[Tensor] = []
    visited: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(root, False)]
    while stack:
        node, done = stack.pop()
        if done:
            order.append(node)
            continue
        if id(node) in visited:
            continue
        visited.add(id(node))
        stack.append((node, True))
        for parent, _ in node._vjps:
            if id(parent) not in visited:
                stack.append((parent, False))
    return order


def backward(loss: Tensor) -> dict[Tensor, np.ndarray]:
    """Reverse-mode gradients of a scalar w.r.t. every grad-enabled leaf.

    Returns a mapping from each reachable grad-enabled leaf tensor to its
    gradient array (same shape as the leaf); the same arrays are left on
    the tensors' ``.grad`` attribute. Gradients of intermediate nodes are
    discarded after use.
    """
    if loss.data.size != 1:
        raise ShapeError(f"backward() needs a scalar loss, got shape {loss.shape}")
    if not loss.requires_grad:
        raise GradientUnsupportedError(
            "loss does not depend on any grad-enabled tensor")
    order = _topo(loss)
    for node in order:
        node.grad = None
    loss.grad = np.ones_like(loss.data)
    record: dict[Tensor, np.ndarray] = {}
    for node in reversed(order):
        grad = node.grad
        if grad is None:
            continue
        if not node._vjps:
            record[node] = grad
            continue
        for parent, fn in node._vjps:
            contrib = fn(grad)
            parent.grad = contrib if parent.grad is None else parent.grad + contrib
        node.grad = None
    return record


# ---------------------------------------------------------------------------
# elementwise operations


def _check_same_shape(op: str, x: Tensor, y: Tensor) -> None:
    if x.shape != y.shape:
        raise ShapeError(f"{op}: operand shapes {x.shape} and {y.shape} differ "
                         "(no implicit broadcasting)")


def add(x, y) -> Tensor:
    x, y = as_tensor(x), as_tensor(y)
    _check_same_shape("add", x, y)
    return _result(x.data + y.data, [(x, lambda g: g), (y, lambda g: g)])


def sub(x, y) -> Tensor:
    x, y = as_tensor(x), as_tensor(y)
    _check_same_shape("sub", x, y)
    return _result(x.data - y.data, [(x, lambda g: g), (y, lambda g: -g)])


def mul(x, y) -> Tensor:
    x, y = as_tensor(x), as_tensor(y)
    _check_same_shape("mul", x, y)
    xd, yd = x.data, y.data
    return _result(xd * yd, [(x, lambda g: g * yd), (y, lambda g: g * xd)])


def div(x, y) -> Tensor:
    """Elementwise quotient; the caller guarantees a nonzero denominator."""
    x, y = as_tensor(x), as_tensor(y)
    _check_same_shape("div", x, y)
    xd, yd = x.data, y.data
    out = xd / yd
    return _result(out, [(x, lambda g: g / yd),
                         (y, lambda g: -g * xd / (yd * yd))])


def affine(x, scale: float, shift: float = 0.0) -> Tensor:
    """scale * x + shift with Python-scalar coefficients."""
    x = as_tensor(x)
    scale = float(scale)
    return _result(x.data * scale + float(shift), [(x, lambda g: g * scale)])


def relu(x) -> Tensor:
    x = as_tensor(x)
    xd = x.data
    return _result(np.maximum(xd, 0.0), [(x, lambda g: g * (xd > 0.0))])


def sigmoid(x) -> Tensor:
    x = as_tensor(x)
    xd = x.data
    out = np.empty_like(xd)
    pos = xd >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-xd[pos]))
    ex = np.exp(xd[~pos])
    out[~pos] = ex / (1.0 + ex)
    return _result(out, [(x, lambda g: g * out * (1.0 - out))])


def log(x) -> Tensor:
    """Natural log; the caller guarantees strictly positive input."""
    x = as_tensor(x)
    xd = x.data
    return _result(np.log(xd), [(x, lambda g: g / xd)])


def clamp(x, lo: float, hi: float) -> Tensor:
    """Clip into [lo, hi]; gradient passes through inside the closed range."""
    x = as_tensor(x)
    xd = x.data
    mask = (xd >= lo) & (xd <= hi)
    return _result(np.clip(xd, lo, hi), [(x, lambda g: g * mask)])


def pointwise(x, f: str) -> Tensor:
    if f == "relu":
        return relu(x)
    if f == "sigmoid":
        return sigmoid(x)
    raise ValueError(f"unknown pointwise function {f!r}")


def binary(x, y, f: str) -> Tensor:
    if f == "add":
        return add(x, y)
    if f == "mul":
        return mul(x, y)
    raise ValueError(f"unknown binary function {f!r}")


def binarize(x, threshold: float) -> Tensor:
    """Hard threshold (>=). Not differentiable: grad-enabled input is rejected."""
    x = as_tensor(x)
    if x.requires_grad:
        raise GradientUnsupportedError(
            "binarize is not differentiable; detach the input first")
    return Tensor((x.data >= threshold).astype(np.float64))


# ---------------------------------------------------------------------------
# shape operations


def permute(x, order) -> Tensor:
    x = as_tensor(x)
    order = tuple(int(a) for a in order)
    if sorted(order) != list(range(x.ndim)):
        raise ShapeError(f"permute: {order} is not a permutation of axes "
                         f"for rank {x.ndim}")
    inverse = tuple(np.argsort(order))
    return _result(np.ascontiguousarray(np.transpose(x.data, order)),
                   [(x, lambda g: np.transpose(g, inverse))])


def unsqueeze(x, axis: int) -> Tensor:
    x = as_tensor(x)
    if not 0 <= axis <= x.ndim:
        raise ShapeError(f"unsqueeze: axis {axis} out of range for rank {x.ndim}")
    shape = x.shape
    return _result(np.expand_dims(x.data, axis),
                   [(x, lambda g: g.reshape(shape))])


def squeeze(x, axis: int) -> Tensor:
    x = as_tensor(x)
    if not 0 <= axis < x.ndim:
        raise ShapeError(f"squeeze: axis {axis} out of range for rank {x.ndim}")
    if x.shape[axis] != 1:
        raise ShapeError(f"squeeze: axis {axis} has size {x.shape[axis]}, not 1")
    shape = x.shape
    return _result(np.squeeze(x.data, axis), [(x, lambda g: g.reshape(shape))])


def concat(xs, axis: int) -> Tensor:
    xs = [as_tensor(t) for t in xs]
    if not xs:
        raise ShapeError("concat: empty operand list")
    rank = xs[0].ndim
    if not 0 <= axis < rank:
        raise ShapeError(f"concat: axis {axis} out of range for rank {rank}")
    for t in xs[1:]:
        if t.ndim != rank:
            raise ShapeError(f"concat: rank mismatch {t.ndim} vs {rank}")
        for ax in range(rank):
            if ax != axis and t.shape[ax] != xs[0].shape[ax]:
                raise ShapeError(f"concat: shapes {t.shape} and {xs[0].shape} "
                                 f"disagree on non-concat axis {ax}")
    out = np.concatenate([t.data for t in xs], axis=axis)

    vjps = []
    offset = 0
    for t in xs:
        width = t.shape[axis]
        sl = tuple(slice(None) if ax != axis else slice(offset, offset + width)
                   for ax in range(rank))
        vjps.append((t, lambda g, sl=sl: g[sl]))
        offset += width
    return _result(out, vjps)


def reduce(x, f: str) -> Tensor:
    if f == "sum":
        return reduce_sum(x)
    if f == "mean":
        return reduce_mean(x)
    raise ValueError(f"unknown reduction {f!r}")


def reduce_sum(x) -> Tensor:
    x = as_tensor(x)
    shape = x.shape
    return _result(np.asarray(x.data.sum()),
                   [(x, lambda g: np.broadcast_to(g, shape))])


def reduce_mean(x) -> Tensor:
    x = as_tensor(x)
    shape = x.shape
    n = x.size
    return _result(np.asarray(x.data.mean()),
                   [(x, lambda g: np.broadcast_to(g / n, shape))])


# ---------------------------------------------------------------------------
# convolution / pooling / interpolation


def _conv_checks(op: str, x: Tensor, w: Tensor, b: Tensor,
                 spatial: int, padding: int) -> int:
    if x.ndim != spatial + 1:
        raise ShapeError(f"{op}: input must have rank {spatial + 1} "
                         f"(Cin plus {spatial} spatial axes), got {x.shape}")
    if w.ndim != spatial + 2:
        raise ShapeError(f"{op}: weight must have rank {spatial + 2}, got {w.shape}")
    k = w.shape[2]
    if any(w.shape[2 + i] != k for i in range(spatial)):
        raise ShapeError(f"{op}: kernel must be cubic/square, got {w.shape}")
    if k % 2 == 0:
        raise ShapeError(f"{op}: kernel size must be odd, got {k}")
    if w.shape[1] != x.shape[0]:
        raise ShapeError(f"{op}: input has {x.shape[0]} channels but the weight "
                         f"expects {w.shape[1]}")
    if b.shape != (w.shape[0],):
        raise ShapeError(f"{op}: bias shape {b.shape} must be ({w.shape[0]},)")
    if padding < 0:
        raise ShapeError(f"{op}: padding must be >= 0, got {padding}")
    for i in range(spatial):
        if x.shape[1 + i] + 2 * padding - k + 1 < 1:
            raise ShapeError(f"{op}: spatial extent {x.shape[1 + i]} too small "
                             f"for kernel {k} with padding {padding}")
    return k


def conv2d(x, w, b, padding: int = 0) -> Tensor:
    """Cross-correlation of (Cin,H,W) with (Cout,Cin,k,k), stride 1, zero pad."""
    x, w, b = as_tensor(x), as_tensor(w), as_tensor(b)
    k = _conv_checks("conv2d", x, w, b, 2, padding)
    p = padding
    xd, wd = x.data, w.data
    cin, h, w_in = xd.shape
    cout = wd.shape[0]
    oh = h + 2 * p - k + 1
    ow = w_in + 2 * p - k + 1
    xp = np.pad(xd, ((0, 0), (p, p), (p, p))) if p else xd
    if k == 1:
        cols = xp.reshape(cin, oh * ow)
    else:
        win = sliding_window_view(xp, (k, k), axis=(1, 2))
        cols = np.ascontiguousarray(win.transpose(0, 3, 4, 1, 2))
        cols = cols.reshape(cin * k * k, oh * ow)
    w2 = wd.reshape(cout, cin * k * k)
    out = (w2 @ cols).reshape(cout, oh, ow) + b.data[:, None, None]

    def vjp_x(g):
        colgrad = w2.T @ g.reshape(cout, oh * ow)
        if k == 1:
            dxp = colgrad.reshape(cin, oh, ow)
        else:
            cg = colgrad.reshape(cin, k, k, oh, ow)
            dxp = np.zeros_like(xp)
            for u in range(k):
                for v in range(k):
                    dxp[:, u:u + oh, v:v + ow] += cg[:, u, v]
        return dxp[:, p:p + h, p:p + w_in] if p else dxp

    return _result(out, [
        (x, vjp_x),
        (w, lambda g: (g.reshape(cout, oh * ow) @ cols.T).reshape(wd.shape)),
        (b, lambda g: g.sum(axis=(1, 2))),
    ])


def conv3d(x, w, b, padding: int = 0) -> Tensor:
    """Cross-correlation of (Cin,D,H,W) with (Cout,Cin,k,k,k), stride 1."""
    x, w, b = as_tensor(x), as_tensor(w), as_tensor(b)
    k = _conv_checks("conv3d", x, w, b, 3, padding)
    p = padding
    xd, wd = x.data, w.data
    cin, d, h, w_in = xd.shape
    cout = wd.shape[0]
    od, oh, ow = (d + 2 * p - k + 1, h + 2 * p - k + 1, w_in + 2 * p - k + 1)
    xp = np.pad(xd, ((0, 0),) + ((p, p),) * 3) if p else xd
    if k == 1:
        cols = xp.reshape(cin, od * oh * ow)
    else:
        win = sliding_window_view(xp, (k, k, k), axis=(1, 2, 3))
        cols = np.ascontiguousarray(win.transpose(0, 4, 5, 6, 1, 2, 3))
        cols = cols.reshape(cin * k ** 3, od * oh * ow)
    w2 = wd.reshape(cout, cin * k ** 3)
    out = (w2 @ cols).reshape(cout, od, oh, ow) + b.data[:, None, None, None]

    def vjp_x(g):
        if k == 1:
            dxp = (w2.T @ g.reshape(cout, od * oh * ow)).reshape(cin, od, oh, ow)
            return dxp[:, p:p + d, p:p + h, p:p + w_in] if p else dxp
        # full correlation of the padded gradient with the flipped kernel
        gp = np.pad(g, ((0, 0),) + ((k - 1, k - 1),) * 3)
        gwin = sliding_window_view(gp, (k, k, k), axis=(1, 2, 3))
        gcols = np.ascontiguousarray(gwin.transpose(0, 4, 5, 6, 1, 2, 3))
        gcols = gcols.reshape(cout * k ** 3, -1)
        wflip = np.ascontiguousarray(wd[:, :, ::-1, ::-1, ::-1])
        wflip = np.ascontiguousarray(wflip.transpose(1, 0, 2, 3, 4))
        dxp = (wflip.reshape(cin, cout * k ** 3) @ gcols).reshape(xp.shape)
        return dxp[:, p:p + d, p:p + h, p:p + w_in] if p else dxp

    return _result(out, [
        (x, vjp_x),
        (w, lambda g: (g.reshape(cout, od * oh * ow) @ cols.T).reshape(wd.shape)),
        (b, lambda g: g.sum(axis=(1, 2, 3))),
    ])


def _box_sum(a: np.ndarray, k: int) -> np.ndarray:
    """Stride-1 k*k window sums with zero padding (k-1)/2, via integral image."""
    p = (k - 1) // 2
    c, h, w = a.shape
    ap = np.pad(a, ((0, 0), (p, p), (p, p)))
    cum = np.pad(ap.cumsum(axis=1).cumsum(axis=2), ((0, 0), (1, 0), (1, 0)))
    return (cum[:, k:k + h, k:k + w] - cum[:, :h, k:k + w]
            - cum[:, k:k + h, :w] + cum[:, :h, :w])


def avg_pool2d(x, k: int, padding: int) -> Tensor:
    """Shape-preserving k*k mean pooling, stride 1, count-include-pad.

    Out-of-bounds positions contribute zero to the window sum but are
    counted in the k*k divisor.
    """
    x = as_tensor(x)
    if x.ndim != 3:
        raise ShapeError(f"avg_pool2d: input must be (C,H,W), got {x.shape}")
    if k % 2 == 0 or k < 1:
        raise ShapeError(f"avg_pool2d: kernel size must be odd, got {k}")
    if padding != (k - 1) // 2:
        raise ShapeError(f"avg_pool2d: padding must be (k-1)/2 = {(k - 1) // 2} "
                         f"to preserve shape, got {padding}")
    scale = 1.0 / (k * k)
    out = _box_sum(x.data, k) * scale
    # The operator matrix is symmetric, so the adjoint is the same filter.
    return _result(out, [(x, lambda g: _box_sum(g, k) * scale)])


@functools.lru_cache(maxsize=None)
def _interp_matrix(dst: int, src: int) -> np.ndarray:
    """1-D bilinear map (dst,src): half-pixel centers, edges clamped.

    Each row holds two convex weights constructed to sum to exactly 1.0,
    so constants are preserved to the last bit.
    """
    m = np.zeros((dst, src))
    scale = src / dst
    for o in range(dst):
        s = (o + 0.5) * scale - 0.5
        s = min(max(s, 0.0), float(src - 1))
        i0 = int(np.floor(s))
        i0 = min(i0, src - 1)
        i1 = min(i0 + 1, src - 1)
        w1 = s - i0
        w0 = 1.0 - w1
        m[o, i0] += w0
        m[o, i1] += 1.0 - w0
    m.setflags(write=False)
    return m


def bilinear_resize(x, out_h: int, out_w: int) -> Tensor:
    """Bilinear interpolation with half-pixel-center coordinate mapping."""
    x = as_tensor(x)
    if x.ndim != 3:
        raise ShapeError(f"bilinear_resize: input must be (C,H,W), got {x.shape}")
    if out_h < 1 or out_w < 1:
        raise ShapeError(f"bilinear_resize: target ({out_h},{out_w}) invalid")
    c, h, w = x.shape
    if out_h == h and out_w == w:
        return _result(x.data.copy(), [(x, lambda g: g)])
    ry = _interp_matrix(out_h, h)
    rx = _interp_matrix(out_w, w)
    out = ry @ x.data @ rx.T
    return _result(out, [(x, lambda g: ry.T @ g @ rx)])


def channel_standardize(x, eps: float = 1e-5) -> Tensor:
    """Per-channel standardization over spatial positions: (x - mean)/(std + eps).

    std is the population standard deviation over each channel's H*W
    positions. For a constant channel (std = 0) the output is zero and the
    std term contributes no gradient (subgradient convention).
    """
    x = as_tensor(x)
    if x.ndim != 3:
        raise ShapeError(f"channel_standardize: input must be (C,H,W), got {x.shape}")
    xd = x.data
    mean = xd.mean(axis=(1, 2), keepdims=True)
    sigma = np.sqrt(((xd - mean) ** 2).mean(axis=(1, 2), keepdims=True))
    denom = sigma + eps
    y = (xd - mean) / denom

    def vjp(g):
        gbar = g.mean(axis=(1, 2), keepdims=True)
        gy = (g * y).mean(axis=(1, 2), keepdims=True)
        inv_sigma = np.where(sigma > 0.0, 1.0 / np.maximum(sigma, 1e-300), 0.0)
        return (g - gbar) / denom - y * gy * inv_sigma

    return _result(y, [(x, vjp)])
