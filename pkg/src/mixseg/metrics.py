"""Six-way mask evaluation: mDice, mIoU, weighted F-measure, S-measure,
max E-measure and MAE.

All functions take a soft prediction in [0,1] and a binary ground truth of
the same 2-D shape and return a float. Dataset-level numbers are unweighted
means of per-image values, accumulated in float64 in sorted-id order.

Conventions (fixed, documented here):
- mDice / mIoU binarize the prediction at a threshold (default 0.5, ">=").
- The weighted F-measure uses a 7x7 Gaussian (sigma 5), beta^2 = 1, and a
  distance-decay background attenuation of 2 - exp(ln(0.5)/5 * d); samples
  with an empty ground truth are undefined and raise.
- The S-measure uses alpha = 0.5, sample (n-1) dispersion terms, a half-up
  rounded foreground centroid for the quadrant split, and the degenerate
  conventions S = 1 - mean(p) / S = mean(p) for all-background /
  all-foreground ground truth; the combined score is floored at 0.
- The max E-measure sweeps 256 thresholds i/255; constant ground truth
  scores the prediction map directly (complemented for all-background).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

EPS = np.finfo(np.float64).eps

WFM_BETA2 = 1.0
WFM_KERNEL = 7
WFM_SIGMA = 5.0
SMEASURE_ALPHA = 0.5
EMEASURE_LEVELS = 256


class EmptyGroundTruthError(ValueError):
    """The metric is undefined for an all-background ground truth."""


@dataclass(frozen=True)
class MetricReport:
    mdice: float
    miou: float
    wfm: float
    smeasure: float
    emeasure_max: float
    mae: float
    n_samples: int
    wfm_excluded: int = 0


def _check_pair(p, g) -> tuple[np.ndarray, np.ndarray]:
    p = np.asarray(p, dtype=np.float64)
    g = np.asarray(g, dtype=np.float64)
    if p.ndim == 3 and p.shape[0] == 1:
        p = p[0]
    if g.ndim == 3 and g.shape[0] == 1:
        g = g[0]
    if p.ndim != 2 or g.ndim != 2:
        raise ValueError(f"masks must be 2-D maps, got {p.shape} and {g.shape}")
    if p.shape != g.shape:
        raise ValueError(f"prediction {p.shape} and ground truth {g.shape} differ")
    if p.min() < 0.0 or p.max() > 1.0:
        raise ValueError("prediction values must lie in [0, 1]")
    if not np.isin(g, (0.0, 1.0)).all():
        raise ValueError("ground truth must be binary (values in {0,1})")
    return p, g


def mdice(p, g, threshold: float = 0.5) -> float:
    p, g = _check_pair(p, g)
    pb = p >= threshold
    gb = g > 0.5
    inter = float(np.logical_and(pb, gb).sum())
    total = float(pb.sum() + gb.sum())
    if total == 0.0:
        return 1.0  # both empty
    return 2.0 * inter / total


def miou(p, g, threshold: float = 0.5) -> float:
    p, g = _check_pair(p, g)
    pb = p >= threshold
    gb = g > 0.5
    union = float(np.logical_or(pb, gb).sum())
    if union == 0.0:
        return 1.0  # both empty
    return float(np.logical_and(pb, gb).sum()) / union


def mae(p, g) -> float:
    p, g = _check_pair(p, g)
    return float(np.abs(p - g).mean())


def _gaussian_kernel(size: int, sigma: float) -> np.ndarray:
    half = (size - 1) // 2
    ax = np.arange(-half, half + 1, dtype=np.float64)
    k = np.exp(-(ax[:, None] ** 2 + ax[None, :] ** 2) / (2.0 * sigma ** 2))
    return k / k.sum()


def wfm(p, g) -> float:
    """Weighted F-measure with distance-weighted background errors."""
    p, g = _check_pair(p, g)
    gb = g > 0.5
    if not gb.any():
        raise EmptyGroundTruthError("weighted F-measure needs foreground pixels")
    err = np.abs(p - g)
    # background pixels inherit the error at their nearest foreground pixel
    dist, (iy, ix) = ndimage.distance_transform_edt(~gb, return_indices=True)
    err_near = err.copy()
    bg = ~gb
    err_near[bg] = err[iy[bg], ix[bg]]
    smoothed = ndimage.correlate(err_near, _gaussian_kernel(WFM_KERNEL, WFM_SIGMA),
                                 mode="constant", cval=0.0)
    combined = np.where(gb & (smoothed < err), smoothed, err)
    decay = 2.0 - np.exp(np.log(0.5) / 5.0 * dist)
    weighted = combined * np.where(gb, 1.0, decay)

    fg_total = float(gb.sum())
    tp = fg_total - float(weighted[gb].sum())
    fp = float(weighted[bg].sum())
    recall = 1.0 - float(weighted[gb].mean())
    precision = tp / (EPS + tp + fp)
    return float((1.0 + WFM_BETA2) * recall * precision
                 / (EPS + recall + WFM_BETA2 * precision))


def _dispersion(values: np.ndarray) -> float:
    if values.size < 2:
        return 0.0
    return float(values.std(ddof=1))


def _object_score(values: np.ndarray) -> float:
    if values.size == 0:
        return 0.0
    x = float(values.mean())
    return 2.0 * x / (x * x + 1.0 + _dispersion(values) + EPS)


def _s_object(p: np.ndarray, gb: np.ndarray) -> float:
    u = float(gb.mean())
    fg = _object_score(p[gb])
    bg = _object_score((1.0 - p)[~gb])
    return u * fg + (1.0 - u) * bg


def _half_up(v: float) -> int:
    return int(np.floor(v + 0.5))


def _ssim_like(p: np.ndarray, g: np.ndarray) -> float:
    n = p.size
    x = float(p.mean())
    y = float(g.mean())
    if n > 1:
        sx = float(((p - x) ** 2).sum()) / (n - 1)
        sy = float(((g - y) ** 2).sum()) / (n - 1)
        sxy = float(((p - x) * (g - y)).sum()) / (n - 1)
    else:
        sx = sy = sxy = 0.0
    alpha = 4.0 * x * y * sxy
    beta = (x * x + y * y) * (sx + sy)
    if alpha != 0.0:
        return alpha / (beta + EPS)
    if beta == 0.0:
        return 1.0
    return 0.0


def _s_region(p: np.ndarray, gb: np.ndarray) -> float:
    h, w = gb.shape
    total = float(gb.sum())
    cols = np.arange(1, w + 1, dtype=np.float64)
    rows = np.arange(1, h + 1, dtype=np.float64)
    # 1-based centroid, half-up rounding; the split keeps cx columns (cy rows)
    # in the left (top) half
    cx = _half_up(float((gb.sum(axis=0) * cols).sum()) / total)
    cy = _half_up(float((gb.sum(axis=1) * rows).sum()) / total)
    area = float(h * w)
    quads = (
        (p[:cy, :cx], gb[:cy, :cx], (cx * cy) / area),
        (p[:cy, cx:], gb[:cy, cx:], ((w - cx) * cy) / area),
        (p[cy:, :cx], gb[cy:, :cx], (cx * (h - cy)) / area),
        (p[cy:, cx:], gb[cy:, cx:], ((w - cx) * (h - cy)) / area),
    )
    score = 0.0
    for pq, gq, weight in quads:
        if pq.size == 0 or weight == 0.0:
            continue
        score += weight * _ssim_like(pq, gq.astype(np.float64))
    return score


def smeasure(p, g) -> float:
    """Structure measure: object- and region-level similarity, alpha = 0.5."""
    p, g = _check_pair(p, g)
    gb = g > 0.5
    mean_g = float(gb.mean())
    if mean_g == 0.0:
        return 1.0 - float(p.mean())
    if mean_g == 1.0:
        return float(p.mean())
    s = SMEASURE_ALPHA * _s_object(p, gb) + (1 - SMEASURE_ALPHA) * _s_region(p, gb)
    return max(0.0, float(s))


def _enhanced_mean(pb: np.ndarray, gb: np.ndarray, g_mean: float) -> float:
    if g_mean == 0.0:
        return float((1.0 - pb).mean())
    if g_mean == 1.0:
        return float(pb.mean())
    phi_p = pb - pb.mean()
    phi_g = gb - g_mean
    align = 2.0 * phi_p * phi_g / (phi_p ** 2 + phi_g ** 2 + EPS)
    return float(((align + 1.0) ** 2 / 4.0).mean())


def emeasure_max(p, g) -> float:
    """Enhanced-alignment measure maximized over 256 binarization levels."""
    p, g = _check_pair(p, g)
    gb = g.astype(np.float64)
    g_mean = float(gb.mean())
    best = 0.0
    for i in range(EMEASURE_LEVELS):
        t = i / (EMEASURE_LEVELS - 1)
        pb = (p >= t).astype(np.float64)
        best = max(best, _enhanced_mean(pb, gb, g_mean))
    return best


def per_image_metrics(p, g, threshold: float = 0.5) -> dict[str, float | None]:
    """All six measures for one pair; wfm is None when undefined (empty GT)."""
    row: dict[str, float | None] = {
        "mdice": mdice(p, g, threshold),
        "miou": miou(p, g, threshold),
        "smeasure": smeasure(p, g),
        "emeasure_max": emeasure_max(p, g),
        "mae": mae(p, g),
    }
    try:
        row["wfm"] = wfm(p, g)
    except EmptyGroundTruthError:
        row["wfm"] = None
    return row


def evaluate_rows(pairs, threshold: float = 0.5
                  ) -> tuple[MetricReport, list[dict[str, float | None]]]:
    pairs = list(pairs)
    if not pairs:
        raise ValueError("evaluate_dataset: empty pair list")
    rows = [per_image_metrics(p, g, threshold) for p, g in pairs]
    wfm_values = [row["wfm"] for row in rows if row["wfm"] is not None]
    report = MetricReport(
        mdice=float(np.mean([row["mdice"] for row in rows])),
        miou=float(np.mean([row["miou"] for row in rows])),
        wfm=float(np.mean(wfm_values)) if wfm_values else float("nan"),
        smeasure=float(np.mean([row["smeasure"] for row in rows])),
        emeasure_max=float(np.mean([row["emeasure_max"] for row in rows])),
        mae=float(np.mean([row["mae"] for row in rows])),
        n_samples=len(rows),
        wfm_excluded=len(rows) - len(wfm_values),
    )
    return report, rows


def evaluate_dataset(pairs, threshold: float = 0.5) -> MetricReport:
    """Per-image metrics averaged over a dataset.

    Samples whose ground truth is empty are excluded from the wfm mean
    only; the exclusion count is reported.
    """
    return evaluate_rows(pairs, threshold)[0]
