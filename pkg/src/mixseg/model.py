"""Multi-scale mixer segmentation network with a depth-prior input.

The network takes an RGB image and a 3-channel depth prior, forms four
resolution branches (native, 256, 128, 64), fuses them into a single
trunk feature map, and refines that map through a stack of paired
global (axis-mixing attention gate) and local (3D grid convolution)
blocks. Four 1x1-conv heads tap the trunk at increasing depths and emit
sigmoid masks; the deepest head keeps the input resolution.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Mapping

import numpy as np

from .config import ModelConfig
from .tensor import (
    Tensor,
    ShapeError,
    add,
    bilinear_resize,
    channel_standardize,
    concat,
    conv2d,
    conv3d,
    mul,
    permute,
    relu,
    sigmoid,
    squeeze,
    unsqueeze,
)

MASK_SCALES = (256, 128, 64)  # fixed resolutions of the three auxiliary heads
NORM_EPS = 1e-5
MIN_SIDE = 64

# (C,H,W) -> (W,C,H); applying it three times is the identity, which walks
# the mixing stage's leading axis through C, W, H and back.
_MIX_CYCLE = (2, 0, 1)


@dataclass
class Model:
    """An instantiated parameter set plus its configuration.

    ``params`` maps parameter names to float32 arrays in a fixed insertion
    order (the checkpoint directory order). Forward passes run in float64;
    float32 is the storage dtype so that serialization round-trips bitwise.
    """

    config: ModelConfig
    params: dict[str, np.ndarray]

    def param_tensors(self, requires_grad: bool = True) -> dict[str, Tensor]:
        return {name: Tensor(arr.astype(np.float64), requires_grad=requires_grad)
                for name, arr in self.params.items()}

    def num_params(self) -> int:
        return sum(arr.size for arr in self.params.values())

    def forward(self, image, depth):
        """Inference forward pass; returns the four masks as Tensors."""
        return forward(self.param_tensors(requires_grad=False), self.config,
                       image, depth)

    def forward_train(self, image, depth, ptensors: Mapping[str, Tensor]):
        """Forward pass through caller-supplied (grad-enabled) parameters."""
        return forward(ptensors, self.config, image, depth)


def build(config: ModelConfig) -> Model:
    """Instantiate parameters: Kaiming-uniform weights (fan-in, ReLU gain),
    zero biases, all draws from one generator seeded by ``config.seed``."""
    rng = np.random.default_rng(config.seed)
    gain = math.sqrt(2.0)

    def kaiming(shape, fan_in):
        bound = gain * math.sqrt(3.0 / fan_in)
        return rng.uniform(-bound, bound, size=shape).astype(np.float32)

    def zeros(*shape):
        return np.zeros(shape, dtype=np.float32)

    c = config.trunk_width
    s = config.mix_size
    ki = config.input_kernel
    k3 = config.conv3d_kernel
    params: dict[str, np.ndarray] = {}
    for i in range(4):
        params[f"input{i}.w"] = kaiming((c, 6, ki, ki), 6 * ki * ki)
        params[f"input{i}.b"] = zeros(c)
    params["fusion.w"] = kaiming((c, 4 * c, 1, 1), 4 * c)
    params["fusion.b"] = zeros(c)
    for j in range(config.num_pairs):
        params[f"pair{j}.g.cc.w"] = kaiming((c, c, 1, 1), c)
        params[f"pair{j}.g.cc.b"] = zeros(c)
        params[f"pair{j}.g.cw.w"] = kaiming((s, s, 1, 1), s)
        params[f"pair{j}.g.cw.b"] = zeros(s)
        params[f"pair{j}.g.ch.w"] = kaiming((s, s, 1, 1), s)
        params[f"pair{j}.g.ch.b"] = zeros(s)
        params[f"pair{j}.l.c3.w"] = kaiming((1, 2, k3, k3, k3), 2 * k3 ** 3)
        params[f"pair{j}.l.c3.b"] = zeros(1)
        params[f"pair{j}.l.ca.w"] = kaiming((c, c, 3, 3), c * 9)
        params[f"pair{j}.l.ca.b"] = zeros(c)
        params[f"pair{j}.l.cb.w"] = kaiming((c, c, 3, 3), c * 9)
        params[f"pair{j}.l.cb.b"] = zeros(c)
    for i in range(4):
        params[f"head{i}.w"] = kaiming((1, c, 1, 1), c)
        params[f"head{i}.b"] = zeros(1)
    return Model(config=config, params=params)


def param_count(config: ModelConfig) -> int:
    """Closed-form parameter count; must equal exhaustive enumeration."""
    c = config.trunk_width
    s = config.mix_size
    n = config.num_pairs
    ki2 = config.input_kernel ** 2
    k33 = config.conv3d_kernel ** 3
    input_convs = 4 * (6 * c * ki2 + c)
    fusion = 4 * c * c + c
    global_blocks = n * ((c * c + c) + 2 * (s * s + s))
    local_blocks = n * ((2 * k33 + 1) + 2 * (9 * c * c + c))
    heads = 4 * (c + 1)
    return input_convs + fusion + global_blocks + local_blocks + heads


def make_multiscale(x) -> tuple[Tensor, Tensor, Tensor, Tensor]:
    """Native image plus bilinear copies at 256, 128 and 64 square."""
    x = x if isinstance(x, Tensor) else Tensor(x)
    if x.ndim != 3:
        raise ShapeError(f"make_multiscale: input must be (C,H,W), got {x.shape}")
    _, h, w = x.shape
    if h < MIN_SIDE or w < MIN_SIDE:
        raise ShapeError(f"make_multiscale: input {h}x{w} is smaller than "
                         f"the minimum side {MIN_SIDE}")
    return (x,) + tuple(bilinear_resize(x, s, s) for s in MASK_SCALES)


def global_forward(g: Mapping[str, Tensor], feat: Tensor,
                   mix_size: int) -> Tensor:
    """Axis-mixing attention gate.

    Standardizes the input per channel, shrinks it to the fixed mixing
    resolution, then runs three 1x1-conv mixing steps; each step convolves
    over the current leading axis and cycles the axes so that channels,
    width and height each lead once (the last step uses a sigmoid). The
    result is resized back and multiplies the input elementwise.
    """
    c, h, w = feat.shape
    s = mix_size
    if g["cc.w"].shape[0] != c:
        raise ShapeError(f"global_forward: block is configured for "
                         f"{g['cc.w'].shape[0]} channels, input has {c}")
    if g["cw.w"].shape[0] != s:
        raise ShapeError(f"global_forward: block is configured for mix size "
                         f"{g['cw.w'].shape[0]}, expected {s}")
    t = bilinear_resize(channel_standardize(feat, NORM_EPS), s, s)
    assert t.shape == (c, s, s)
    t = permute(relu(conv2d(t, g["cc.w"], g["cc.b"])), _MIX_CYCLE)
    assert t.shape == (s, c, s)
    t = permute(relu(conv2d(t, g["cw.w"], g["cw.b"])), _MIX_CYCLE)
    assert t.shape == (s, s, c)
    t = permute(sigmoid(conv2d(t, g["ch.w"], g["ch.b"])), _MIX_CYCLE)
    assert t.shape == (c, s, s)
    gate = bilinear_resize(t, h, w)
    return mul(gate, feat)


def local_forward(l: Mapping[str, Tensor], feat: Tensor,
                  gated: Tensor) -> Tensor:
    """3D grid convolution block with a residual connection.

    Stacks the block input and the gated features as the two channels of a
    3D convolution over the (H, W, C) grid, squeezes back to one grid,
    applies two 3x3 convolutions with a ReLU between them, and adds the
    block input.
    """
    if feat.shape != gated.shape:
        raise ShapeError(f"local_forward: inputs {feat.shape} and "
                         f"{gated.shape} differ")
    k = l["c3.w"].shape[-1]
    a = unsqueeze(permute(feat, (1, 2, 0)), 0)    # (1,H,W,C)
    b = unsqueeze(permute(gated, (1, 2, 0)), 0)
    grid = concat([a, b], axis=0)                 # (2,H,W,C)
    t = conv3d(grid, l["c3.w"], l["c3.b"], padding=(k - 1) // 2)
    t = permute(squeeze(t, 0), (2, 0, 1))         # back to (C,H,W)
    t = conv2d(t, l["ca.w"], l["ca.b"], padding=1)
    t = relu(t)
    t = conv2d(t, l["cb.w"], l["cb.b"], padding=1)
    return add(t, feat)


def _subdict(pt: Mapping[str, Tensor], prefix: str) -> dict[str, Tensor]:
    cut = len(prefix)
    return {name[cut:]: t for name, t in pt.items() if name.startswith(prefix)}


def forward(pt: Mapping[str, Tensor], config: ModelConfig, image,
            depth) -> tuple[Tensor, Tensor, Tensor, Tensor]:
    """Full network forward pass.

    Returns masks at (1,H,W), (1,256,256), (1,128,128) and (1,64,64); the
    first (native-resolution) mask is the model's segmentation output.
    """
    image = image if isinstance(image, Tensor) else Tensor(image)
    depth = depth if isinstance(depth, Tensor) else Tensor(depth)
    if image.ndim != 3 or image.shape[0] != 3:
        raise ShapeError(f"forward: image must be (3,H,W), got {image.shape}")
    if image.shape != depth.shape:
        raise ShapeError(f"forward: image {image.shape} and depth "
                         f"{depth.shape} sizes differ")
    _, h, w = image.shape
    image_scales = make_multiscale(image)
    depth_scales = make_multiscale(depth)

    pad = (config.input_kernel - 1) // 2
    branches = []
    for i in range(4):
        both = concat([image_scales[i], depth_scales[i]], axis=0)
        f = conv2d(both, pt[f"input{i}.w"], pt[f"input{i}.b"], padding=pad)
        branches.append(bilinear_resize(f, h, w))
    feat = conv2d(concat(branches, axis=0), pt["fusion.w"], pt["fusion.b"])

    taps = config.head_taps
    head_feats = {}
    for j in range(config.num_pairs):
        gated = global_forward(_subdict(pt, f"pair{j}.g."), feat,
                               config.mix_size)
        feat = local_forward(_subdict(pt, f"pair{j}.l."), feat, gated)
        if (j + 1) in taps:
            head_feats[j + 1] = feat

    masks_full = []
    for i, tap in enumerate(taps):
        m = sigmoid(conv2d(head_feats[tap], pt[f"head{i}.w"], pt[f"head{i}.b"]))
        masks_full.append(m)
    native = masks_full[3]
    scaled = tuple(bilinear_resize(masks_full[i], s, s)
                   for i, s in enumerate(MASK_SCALES))
    return (native,) + scaled
