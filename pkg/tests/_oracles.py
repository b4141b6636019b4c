"""Independent brute-force oracles shared by the unit and acceptance tests.

These deliberately avoid the library's fast paths (distance transforms,
stacked matrix products, analytic gradients) so agreement between the two
routes is evidence, not tautology.
"""

from __future__ import annotations

import numpy as np


def brute_hd95(a: np.ndarray, b: np.ndarray):
    """All-pairs 95th-percentile Hausdorff distance on {0,1} arrays."""
    pa = np.argwhere(a.astype(bool)).astype(np.float64)
    pb = np.argwhere(b.astype(bool)).astype(np.float64)
    if len(pa) == 0 and len(pb) == 0:
        return 0.0
    if (len(pa) == 0) != (len(pb) == 0):
        return None
    d2 = ((pa[:, None, :] - pb[None, :, :]) ** 2).sum(axis=2)
    directed_ab = np.sqrt(d2.min(axis=1))
    directed_ba = np.sqrt(d2.min(axis=0))
    return float(np.percentile(np.concatenate([directed_ab, directed_ba]), 95.0))


def loop_confusion(pred: np.ndarray, gt: np.ndarray) -> tuple[int, int, int, int]:
    """Pixel-by-pixel confusion counts via an explicit scalar loop."""
    tp = fp = fn = tn = 0
    for y in range(pred.shape[0]):
        for x in range(pred.shape[1]):
            p, g = int(pred[y, x]), int(gt[y, x])
            if p and g:
                tp += 1
            elif p and not g:
                fp += 1
            elif not p and g:
                fn += 1
            else:
                tn += 1
    return tp, fp, fn, tn


def loop_fuse(stack: np.ndarray) -> np.ndarray:
    """Per-pixel scalar-loop average of an (N, H, W) vote stack."""
    n, h, w = stack.shape
    out = np.zeros((h, w))
    for y in range(h):
        for x in range(w):
            total = 0
            for k in range(n):
                total += int(stack[k, y, x])
            out[y, x] = total / n
    return out


def loop_iou_distance(a: np.ndarray, b: np.ndarray) -> float:
    """1 - IoU with explicit counting; both-empty pairs have distance 0."""
    a = a.astype(bool)
    b = b.astype(bool)
    union = int(np.count_nonzero(a | b))
    if union == 0:
        return 0.0
    inter = int(np.count_nonzero(a & b))
    return 1.0 - inter / union


def loop_ged_squared(samples_p, samples_q) -> float:
    """Fully expanded double sums of the squared energy distance."""
    n, m = len(samples_p), len(samples_q)
    cross = sum(
        loop_iou_distance(y, yhat) for y in samples_p for yhat in samples_q
    ) / (n * m)
    within_p = sum(
        loop_iou_distance(y, y2) for y in samples_p for y2 in samples_p
    ) / (n * n)
    within_q = sum(
        loop_iou_distance(y, y2) for y in samples_q for y2 in samples_q
    ) / (m * m)
    return 2.0 * cross - within_p - within_q


def random_mask(rng: np.random.Generator, height: int, width: int, p: float = 0.35) -> np.ndarray:
    return (rng.random((height, width)) < p).astype(np.uint8)
