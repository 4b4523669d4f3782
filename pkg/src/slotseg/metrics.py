"""Pure metric functions: IoU, adjusted Rand index, compensated sums.

Everything here is numpy-only with no package dependencies, so the
prompt-synthesis and evaluation layers can both build on it.
"""

from __future__ import annotations

import numpy as np


def iou(pred: np.ndarray, gt: np.ndarray) -> float:
    """Intersection over union of two binary grids; 1.0 when both empty."""
    pred = np.asarray(pred)
    gt = np.asarray(gt)
    if pred.shape != gt.shape:
        raise ValueError(f"shape mismatch {pred.shape} vs {gt.shape}")
    p = pred.astype(bool)
    g = gt.astype(bool)
    union = np.logical_or(p, g).sum()
    if union == 0:
        return 1.0
    return float(np.logical_and(p, g).sum() / union)


def _comb2(x) -> float:
    x = np.asarray(x, dtype=np.float64)
    return float((x * (x - 1.0) / 2.0).sum())


def adjusted_rand_index(labels_a: np.ndarray, labels_b: np.ndarray) -> float:
    """Chance-corrected pair-counting agreement of two labelings."""
    a = np.asarray(labels_a).ravel()
    b = np.asarray(labels_b).ravel()
    if a.shape != b.shape:
        raise ValueError("label arrays must have equal length")
    n = a.size
    if n == 0:
        raise ValueError("empty label arrays")
    _, a_idx = np.unique(a, return_inverse=True)
    _, b_idx = np.unique(b, return_inverse=True)
    contingency = np.zeros((a_idx.max() + 1, b_idx.max() + 1), dtype=np.int64)
    np.add.at(contingency, (a_idx, b_idx), 1)

    index = _comb2(contingency)
    sum_a = _comb2(contingency.sum(axis=1))
    sum_b = _comb2(contingency.sum(axis=0))
    total = n * (n - 1.0) / 2.0
    if total == 0:
        return 1.0
    expected = sum_a * sum_b / total
    max_index = 0.5 * (sum_a + sum_b)
    if max_index == expected:
        # both partitions trivial (all singletons or a single cluster)
        return 1.0
    return float((index - expected) / (max_index - expected))


def ari(slot_assignment: np.ndarray, gt_assignment: np.ndarray,
        ignore_background: bool = True):
    """ARI between slot and instance assignments; returns None when the
    foreground is empty and ignore_background is set (undefined case)."""
    slot_assignment = np.asarray(slot_assignment).ravel()
    gt_assignment = np.asarray(gt_assignment).ravel()
    if slot_assignment.shape != gt_assignment.shape:
        raise ValueError("assignment arrays must have equal length")
    if ignore_background:
        fg = gt_assignment > 0
        if not fg.any():
            return None
        return adjusted_rand_index(slot_assignment[fg], gt_assignment[fg])
    return adjusted_rand_index(slot_assignment, gt_assignment)


def kahan_mean(values) -> float:
    """Compensated mean so aggregate order-independence is testable."""
    total = 0.0
    comp = 0.0
    count = 0
    for v in values:
        count += 1
        y = float(v) - comp
        t = total + y
        comp = (t - total) - y
        total = t
    if count == 0:
        raise ValueError("mean of empty sequence")
    return total / count


def kahan_std(values) -> float:
    vals = [float(v) for v in values]
    m = kahan_mean(vals)
    if len(vals) == 1:
        return 0.0
    var = kahan_mean([(v - m) ** 2 for v in vals])
    return float(np.sqrt(var))


def bilinear_upsample(grid: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    """Resize a 2-D grid with bilinear interpolation (half-pixel centers)."""
    grid = np.asarray(grid, dtype=np.float64)
    h, w = grid.shape
    ys = (np.arange(out_h) + 0.5) * h / out_h - 0.5
    xs = (np.arange(out_w) + 0.5) * w / out_w - 0.5
    y0 = np.clip(np.floor(ys).astype(int), 0, h - 1)
    x0 = np.clip(np.floor(xs).astype(int), 0, w - 1)
    y1 = np.clip(y0 + 1, 0, h - 1)
    x1 = np.clip(x0 + 1, 0, w - 1)
    wy = np.clip(ys - y0, 0.0, 1.0)[:, None]
    wx = np.clip(xs - x0, 0.0, 1.0)[None, :]
    top = grid[np.ix_(y0, x0)] * (1 - wx) + grid[np.ix_(y0, x1)] * wx
    bot = grid[np.ix_(y1, x0)] * (1 - wx) + grid[np.ix_(y1, x1)] * wx
    return top * (1 - wy) + bot * wy
