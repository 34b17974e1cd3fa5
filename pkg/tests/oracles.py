"""Independent straight-line reference implementations used as test oracles.

Everything here is written against plain numpy/math with explicit loops or
direct formula transcription, deliberately sharing no code with the
package under test.
"""

from __future__ import annotations

import math

import numpy as np


# ---------------------------------------------------------------------------
# kernel oracles


def conv2d_loops(x, w, b, padding=0):
    cout, cin, k, _ = w.shape
    _, h, ww = x.shape
    oh = h + 2 * padding - k + 1
    ow = ww + 2 * padding - k + 1
    xp = np.zeros((cin, h + 2 * padding, ww + 2 * padding))
    xp[:, padding:padding + h, padding:padding + ww] = x
    out = np.zeros((cout, oh, ow))
    for o in range(cout):
        for y in range(oh):
            for xx in range(ow):
                acc = b[o]
                for i in range(cin):
                    for u in range(k):
                        for v in range(k):
                            acc += xp[i, y + u, xx + v] * w[o, i, u, v]
                out[o, y, xx] = acc
    return out


def conv3d_loops(x, w, b, padding=0):
    cout, cin, k, _, _ = w.shape
    _, d, h, ww = x.shape
    od = d + 2 * padding - k + 1
    oh = h + 2 * padding - k + 1
    ow = ww + 2 * padding - k + 1
    xp = np.zeros((cin, d + 2 * padding, h + 2 * padding, ww + 2 * padding))
    xp[:, padding:padding + d, padding:padding + h, padding:padding + ww] = x
    out = np.zeros((cout, od, oh, ow))
    for o in range(cout):
        for z in range(od):
            for y in range(oh):
                for xx in range(ow):
                    acc = b[o]
                    for i in range(cin):
                        for u in range(k):
                            for v in range(k):
                                for r in range(k):
                                    acc += (xp[i, z + u, y + v, xx + r]
                                            * w[o, i, u, v, r])
                    out[o, z, y, xx] = acc
    return out


def conv2d_slices(x, w, b, padding=0):
    """Offset-accumulation convolution; used where scalar loops are too slow
    (whole-network references). Agrees with conv2d_loops by construction."""
    cout, cin, k, _ = w.shape
    _, h, ww = x.shape
    oh = h + 2 * padding - k + 1
    ow = ww + 2 * padding - k + 1
    xp = np.zeros((cin, h + 2 * padding, ww + 2 * padding))
    xp[:, padding:padding + h, padding:padding + ww] = x
    out = np.zeros((cout, oh, ow))
    for o in range(cout):
        out[o] += b[o]
        for i in range(cin):
            for u in range(k):
                for v in range(k):
                    out[o] += w[o, i, u, v] * xp[i, u:u + oh, v:v + ow]
    return out


def conv3d_slices(x, w, b, padding=0):
    cout, cin, k, _, _ = w.shape
    _, d, h, ww = x.shape
    od = d + 2 * padding - k + 1
    oh = h + 2 * padding - k + 1
    ow = ww + 2 * padding - k + 1
    xp = np.zeros((cin, d + 2 * padding, h + 2 * padding, ww + 2 * padding))
    xp[:, padding:padding + d, padding:padding + h, padding:padding + ww] = x
    out = np.zeros((cout, od, oh, ow))
    for o in range(cout):
        out[o] += b[o]
        for i in range(cin):
            for u in range(k):
                for v in range(k):
                    for r in range(k):
                        out[o] += (w[o, i, u, v, r]
                                   * xp[i, u:u + od, v:v + oh, r:r + ow])
    return out


def avg_pool_loops(x, k):
    """Stride-1 k*k windowed mean; zero outside, divisor always k*k."""
    c, h, w = x.shape
    half = (k - 1) // 2
    out = np.zeros_like(x)
    for ch in range(c):
        for y in range(h):
            for xx in range(w):
                acc = 0.0
                for u in range(-half, half + 1):
                    for v in range(-half, half + 1):
                        yy, xv = y + u, xx + v
                        if 0 <= yy < h and 0 <= xv < w:
                            acc += x[ch, yy, xv]
                out[ch, y, xx] = acc / (k * k)
    return out


def bilinear_point(plane, s, t):
    """Sample one (row=s, col=t) location with clamped corner blending."""
    h, w = plane.shape
    s = min(max(s, 0.0), h - 1.0)
    t = min(max(t, 0.0), w - 1.0)
    y0 = int(math.floor(s))
    x0 = int(math.floor(t))
    y1 = min(y0 + 1, h - 1)
    x1 = min(x0 + 1, w - 1)
    fy = s - y0
    fx = t - x0
    top = (1.0 - fx) * plane[y0, x0] + fx * plane[y0, x1]
    bot = (1.0 - fx) * plane[y1, x0] + fx * plane[y1, x1]
    return (1.0 - fy) * top + fy * bot


def bilinear_scalar(x, out_h, out_w):
    """Half-pixel-center bilinear resize evaluated pointwise."""
    c, h, w = x.shape
    out = np.zeros((c, out_h, out_w))
    for ch in range(c):
        for y in range(out_h):
            for xx in range(out_w):
                s = (y + 0.5) * (h / out_h) - 0.5
                t = (xx + 0.5) * (w / out_w) - 0.5
                out[ch, y, xx] = bilinear_point(x[ch], s, t)
    return out


def permute_index(x, order):
    """Element-by-element permutation via index arithmetic."""
    out = np.zeros(tuple(x.shape[a] for a in order))
    for src_idx in np.ndindex(*x.shape):
        dst_idx = tuple(src_idx[a] for a in order)
        out[dst_idx] = x[src_idx]
    return out


# ---------------------------------------------------------------------------
# optimizer oracle


def adamw_scalar(p, g, m, v, step, lr, beta1, beta2, eps, wd):
    m = beta1 * m + (1 - beta1) * g
    v = beta2 * v + (1 - beta2) * g * g
    mhat = m / (1 - beta1 ** step)
    vhat = v / (1 - beta2 ** step)
    p = p - lr * (mhat / (math.sqrt(vhat) + eps) + wd * p)
    return p, m, v


# ---------------------------------------------------------------------------
# loss oracles


def weight_map_scalar(g):
    pooled = avg_pool_loops(g, 31)
    return 1.0 + 5.0 * np.abs(np.clip(pooled, 0.0, 1.0) - g)


def wbce_scalar(p, g, w, eps=1e-7):
    num = 0.0
    den = 0.0
    for idx in np.ndindex(*g.shape):
        pc = min(max(p[idx], eps), 1.0 - eps)
        num += w[idx] * (-g[idx] * math.log(pc)
                         - (1.0 - g[idx]) * math.log(1.0 - pc))
        den += w[idx]
    return num / den


def wiou_scalar(p, g, w, eps=1e-7):
    if not g.any() and not p.any():
        return 0.0
    inter = 0.0
    union = 0.0
    for idx in np.ndindex(*g.shape):
        pc = min(max(p[idx], eps), 1.0 - eps)
        inter += w[idx] * pc * g[idx]
        union += w[idx] * (pc + g[idx] - pc * g[idx])
    return 1.0 - inter / union


# ---------------------------------------------------------------------------
# metric oracles


def dice_iou_scalar(p, g, threshold=0.5):
    pb = p >= threshold
    gb = g > 0.5
    inter = float(np.sum(pb & gb))
    psum = float(pb.sum())
    gsum = float(gb.sum())
    union = psum + gsum - inter
    dice = 1.0 if psum + gsum == 0 else 2.0 * inter / (psum + gsum)
    iou = 1.0 if union == 0 else inter / union
    return dice, iou


def mae_scalar(p, g):
    acc = 0.0
    for idx in np.ndindex(*p.shape):
        acc += abs(p[idx] - g[idx])
    return acc / p.size


_EPS = float(np.finfo(np.float64).eps)


def wfm_reference(p, g):
    """Weighted F-measure, brute-force distances and explicit smoothing.

    Ties in the nearest-foreground search are broken by scan order; use
    ground truths with a unique nearest foreground pixel (e.g. filled
    rectangles) when comparing implementations.
    """
    h, w = g.shape
    gb = g > 0.5
    fg = [(y, x) for y in range(h) for x in range(w) if gb[y, x]]
    assert fg, "oracle needs foreground"
    err = np.abs(p - g)

    dist = np.zeros((h, w))
    err_near = err.copy()
    for y in range(h):
        for x in range(w):
            if gb[y, x]:
                continue
            best = None
            best_d2 = None
            for (fy, fx) in fg:
                d2 = (y - fy) ** 2 + (x - fx) ** 2
                if best_d2 is None or d2 < best_d2:
                    best_d2 = d2
                    best = (fy, fx)
            dist[y, x] = math.sqrt(best_d2)
            err_near[y, x] = err[best]

    # 7x7 gaussian, sigma 5, normalized, zero padding
    ker = np.zeros((7, 7))
    for u in range(7):
        for v in range(7):
            ker[u, v] = math.exp(-((u - 3) ** 2 + (v - 3) ** 2) / (2 * 25.0))
    ker /= ker.sum()
    smoothed = np.zeros((h, w))
    for y in range(h):
        for x in range(w):
            acc = 0.0
            for u in range(7):
                for v in range(7):
                    yy, xx = y + u - 3, x + v - 3
                    if 0 <= yy < h and 0 <= xx < w:
                        acc += err_near[yy, xx] * ker[u, v]
            smoothed[y, x] = acc

    # the nearest-foreground map feeds only the smoothing; the attenuated
    # background error is the raw one
    ew = np.zeros((h, w))
    for y in range(h):
        for x in range(w):
            if gb[y, x]:
                ew[y, x] = min(err[y, x], smoothed[y, x])
            else:
                ew[y, x] = err[y, x] * (2.0 - math.exp(math.log(0.5) / 5.0
                                                       * dist[y, x]))
    n_fg = len(fg)
    tp = n_fg - sum(ew[y, x] for (y, x) in fg)
    fp = sum(ew[y, x] for y in range(h) for x in range(w) if not gb[y, x])
    recall = 1.0 - sum(ew[y, x] for (y, x) in fg) / n_fg
    precision = tp / (_EPS + tp + fp)
    return 2.0 * recall * precision / (_EPS + recall + precision)


def _obj(values):
    if len(values) == 0:
        return 0.0
    x = sum(values) / len(values)
    if len(values) > 1:
        var = sum((v - x) ** 2 for v in values) / (len(values) - 1)
        sd = math.sqrt(var)
    else:
        sd = 0.0
    return 2.0 * x / (x * x + 1.0 + sd + _EPS)


def _ssim_quadrant(pq, gq):
    n = pq.size
    x = float(pq.mean())
    y = float(gq.mean())
    if n > 1:
        sx = float(((pq - x) ** 2).sum()) / (n - 1)
        sy = float(((gq - y) ** 2).sum()) / (n - 1)
        sxy = float(((pq - x) * (gq - y)).sum()) / (n - 1)
    else:
        sx = sy = sxy = 0.0
    alpha = 4.0 * x * y * sxy
    beta = (x * x + y * y) * (sx + sy)
    if alpha != 0.0:
        return alpha / (beta + _EPS)
    return 1.0 if beta == 0.0 else 0.0


def smeasure_reference(p, g):
    h, w = g.shape
    gb = g > 0.5
    mean_g = gb.mean()
    if mean_g == 0.0:
        return 1.0 - p.mean()
    if mean_g == 1.0:
        return p.mean()

    fg_vals = [p[y, x] for y in range(h) for x in range(w) if gb[y, x]]
    bg_vals = [1.0 - p[y, x] for y in range(h) for x in range(w) if not gb[y, x]]
    s_object = mean_g * _obj(fg_vals) + (1.0 - mean_g) * _obj(bg_vals)

    total = float(gb.sum())
    cx = int(math.floor(sum((x + 1) * gb[:, x].sum() for x in range(w))
                        / total + 0.5))
    cy = int(math.floor(sum((y + 1) * gb[y, :].sum() for y in range(h))
                        / total + 0.5))
    area = h * w
    s_region = 0.0
    for (rows, cols, wt) in (
            (slice(0, cy), slice(0, cx), cx * cy / area),
            (slice(0, cy), slice(cx, w), (w - cx) * cy / area),
            (slice(cy, h), slice(0, cx), cx * (h - cy) / area),
            (slice(cy, h), slice(cx, w), (w - cx) * (h - cy) / area)):
        pq = p[rows, cols]
        gq = gb[rows, cols].astype(float)
        if pq.size == 0 or wt == 0.0:
            continue
        s_region += wt * _ssim_quadrant(pq, gq)

    s = 0.5 * s_object + 0.5 * s_region
    return max(0.0, s)


def emeasure_reference(p, g):
    gb = (g > 0.5).astype(float)
    mean_g = gb.mean()
    best = 0.0
    for i in range(256):
        t = i / 255.0
        pb = (p >= t).astype(float)
        if mean_g == 0.0:
            score = (1.0 - pb).mean()
        elif mean_g == 1.0:
            score = pb.mean()
        else:
            phi_p = pb - pb.mean()
            phi_g = gb - mean_g
            xi = 2.0 * phi_p * phi_g / (phi_p ** 2 + phi_g ** 2 + _EPS)
            score = ((xi + 1.0) ** 2 / 4.0).mean()
        best = max(best, float(score))
    return best


# ---------------------------------------------------------------------------
# network block oracles


def normalize_channels_ref(x, eps=1e-5):
    out = np.zeros_like(x)
    for c in range(x.shape[0]):
        mu = x[c].mean()
        sd = math.sqrt(((x[c] - mu) ** 2).mean())
        out[c] = (x[c] - mu) / (sd + eps)
    return out


def conv1x1_ref(x, w, b):
    """1x1 convolution over the leading axis of a rank-3 array."""
    cout = w.shape[0]
    out = np.zeros((cout,) + x.shape[1:])
    for o in range(cout):
        acc = np.full(x.shape[1:], b[o])
        for i in range(x.shape[0]):
            acc = acc + w[o, i, 0, 0] * x[i]
        out[o] = acc
    return out


def relu_ref(x):
    return np.where(x > 0, x, 0.0)


def sigmoid_ref(x):
    return 1.0 / (1.0 + np.exp(-x))


def global_block_reference(weights, feat, mix_size):
    """Straight-line recomputation of the axis-mixing attention gate."""
    c, h, w = feat.shape
    t = bilinear_scalar(normalize_channels_ref(feat), mix_size, mix_size)
    t = relu_ref(conv1x1_ref(t, weights["cc.w"], weights["cc.b"]))
    t = t.transpose(2, 0, 1)
    t = relu_ref(conv1x1_ref(t, weights["cw.w"], weights["cw.b"]))
    t = t.transpose(2, 0, 1)
    t = sigmoid_ref(conv1x1_ref(t, weights["ch.w"], weights["ch.b"]))
    t = t.transpose(2, 0, 1)
    gate = bilinear_scalar(t, h, w)
    return gate * feat


def local_block_reference(weights, feat, gated, conv2d_fn=conv2d_loops,
                          conv3d_fn=conv3d_loops):
    """Straight-line recomputation of the 3D grid-conv residual block."""
    grid = np.stack([feat.transpose(1, 2, 0), gated.transpose(1, 2, 0)])
    k = weights["c3.w"].shape[-1]
    t = conv3d_fn(grid, weights["c3.w"], weights["c3.b"],
                  padding=(k - 1) // 2)
    t = t[0].transpose(2, 0, 1)
    t = conv2d_fn(t, weights["ca.w"], weights["ca.b"], padding=1)
    t = relu_ref(t)
    t = conv2d_fn(t, weights["cb.w"], weights["cb.b"], padding=1)
    return t + feat


def forward_reference(params, config, image, depth):
    """Straight-line recomputation of the full forward pass (slice convs)."""
    h, w = image.shape[1:]
    scales = [(h, w), (256, 256), (128, 128), (64, 64)]
    pad = (config.input_kernel - 1) // 2
    branches = []
    for i, (sh, sw) in enumerate(scales):
        im = image if (sh, sw) == (h, w) else bilinear_scalar(image, sh, sw)
        de = depth if (sh, sw) == (h, w) else bilinear_scalar(depth, sh, sw)
        both = np.concatenate([im, de], axis=0)
        f = conv2d_slices(both, params[f"input{i}.w"], params[f"input{i}.b"],
                          padding=pad)
        branches.append(f if (sh, sw) == (h, w) else bilinear_scalar(f, h, w))
    feat = conv1x1_ref(np.concatenate(branches, axis=0),
                       params["fusion.w"], params["fusion.b"])
    head_feats = {}
    for j in range(config.num_pairs):
        gw = {key: params[f"pair{j}.g.{key}"]
              for key in ("cc.w", "cc.b", "cw.w", "cw.b", "ch.w", "ch.b")}
        lw = {key: params[f"pair{j}.l.{key}"]
              for key in ("c3.w", "c3.b", "ca.w", "ca.b", "cb.w", "cb.b")}
        gated = global_block_reference(gw, feat, config.mix_size)
        feat = local_block_reference(lw, feat, gated, conv2d_fn=conv2d_slices,
                                     conv3d_fn=conv3d_slices)
        if (j + 1) in config.head_taps:
            head_feats[j + 1] = feat
    masks = []
    for i, tap in enumerate(config.head_taps):
        m = sigmoid_ref(conv1x1_ref(head_feats[tap], params[f"head{i}.w"],
                                    params[f"head{i}.b"]))
        masks.append(m)
    out = [masks[3]]
    for i, side in enumerate((256, 128, 64)):
        out.append(bilinear_scalar(masks[i], side, side))
    return tuple(out)


def luminance_reference(image):
    h, w = image.shape[1:]
    out = np.zeros((h, w))
    for y in range(h):
        for x in range(w):
            out[y, x] = (0.299 * image[0, y, x] + 0.587 * image[1, y, x]
                         + 0.114 * image[2, y, x])
    lo, hi = out.min(), out.max()
    if hi > lo:
        return (out - lo) / (hi - lo)
    return np.zeros_like(out)
