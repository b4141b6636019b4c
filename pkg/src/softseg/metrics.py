"""Segmentation evaluation metrics and the threshold-sweep protocol.

Overlap metrics (DSC, IoU, precision, recall) are derived from pixel-wise
confusion counts. Surface distance is the 95th-percentile Hausdorff distance
over foreground pixel centers. Distribution distance between an annotation
set and predictions uses the squared generalized energy distance with
d(x, y) = 1 - IoU(x, y).

Conventions when masks are empty:
  * both masks empty: DSC = IoU = 1, HD95 = 0;
  * exactly one mask empty: HD95 is undefined (``None``) and excluded from
    sweep aggregates, with the number of exclusions recorded;
  * precision = 1 when tp+fp = 0 and fn = 0, else 0 on an empty prediction;
    recall = 1 when tp+fn = 0.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from scipy.ndimage import distance_transform_edt

from .masks import AnnotationSet, BinaryMask, SoftMask, threshold

METRIC_NAMES = ("dsc", "iou", "precision", "recall", "hd95")

#: The confidence sweep of the evaluation protocol: 10% to 90%, step 10%.
DEFAULT_THRESHOLDS = tuple(round(0.1 * (i + 1), 10) for i in range(9))


def _check_same_shape(a, b) -> None:
    if a.shape != b.shape:
        raise ValueError(f"mask shapes differ: {a.shape} vs {b.shape}")


@dataclass(frozen=True)
class ConfusionCounts:
    """Pixel-wise confusion counts between a predicted and a reference mask."""

    tp: int
    fp: int
    fn: int
    tn: int

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.fn + self.tn


def confusion(pred: BinaryMask, gt: BinaryMask) -> ConfusionCounts:
    """Count tp/fp/fn/tn pixels of `pred` against `gt`."""
    _check_same_shape(pred, gt)
    p = pred.values.astype(bool)
    g = gt.values.astype(bool)
    tp = int(np.count_nonzero(p & g))
    fp = int(np.count_nonzero(p & ~g))
    fn = int(np.count_nonzero(~p & g))
    tn = p.size - tp - fp - fn
    return ConfusionCounts(tp=tp, fp=fp, fn=fn, tn=tn)


def dice(pred: BinaryMask, gt: BinaryMask) -> float:
    """Dice similarity coefficient 2|A∩B| / (|A|+|B|); 1 when both empty."""
    c = confusion(pred, gt)
    denom = 2 * c.tp + c.fp + c.fn
    if denom == 0:
        return 1.0
    return 2.0 * c.tp / denom


def iou(pred: BinaryMask, gt: BinaryMask) -> float:
    """Intersection over union |A∩B| / |A∪B|; 1 when both empty."""
    c = confusion(pred, gt)
    union = c.tp + c.fp + c.fn
    if union == 0:
        return 1.0
    return c.tp / union


def iou_distance(a: BinaryMask, b: BinaryMask) -> float:
    """The metric d(a, b) = 1 - IoU(a, b) used inside the energy distance."""
    return 1.0 - iou(a, b)


def precision_recall(pred: BinaryMask, gt: BinaryMask) -> tuple[float, float]:
    """(precision, recall) with the empty-denominator conventions above."""
    c = confusion(pred, gt)
    if c.tp + c.fp == 0:
        precision = 1.0 if c.fn == 0 else 0.0
    else:
        precision = c.tp / (c.tp + c.fp)
    recall = 1.0 if c.tp + c.fn == 0 else c.tp / (c.tp + c.fn)
    return precision, recall


def hausdorff95(a: BinaryMask, b: BinaryMask) -> Optional[float]:
    """95th-percentile Hausdorff distance between two masks, in pixels.

    Directed nearest-neighbor Euclidean distances are collected from every
    foreground pixel of `a` to the foreground of `b` and vice versa; the two
    lists are pooled and the 95th percentile (linear interpolation) of the
    pool is returned. Foreground points are pixel centers at integer
    coordinates.

    Returns 0.0 when both masks are empty and ``None`` (undefined) when
    exactly one is empty: a finite sentinel would corrupt sweep averages.
    """
    _check_same_shape(a, b)
    fa = a.values.astype(bool)
    fb = b.values.astype(bool)
    a_any = bool(fa.any())
    b_any = bool(fb.any())
    if not a_any and not b_any:
        return 0.0
    if a_any != b_any:
        return None
    # Exact EDT of each mask's complement gives, at every pixel, the distance
    # to that mask's nearest foreground pixel.
    dist_to_b = distance_transform_edt(~fb)
    dist_to_a = distance_transform_edt(~fa)
    pooled = np.concatenate([dist_to_b[fa], dist_to_a[fb]])
    return float(np.percentile(pooled, 95.0))


@dataclass(frozen=True)
class MetricRow:
    """All per-threshold metrics for one prediction/ground-truth pair."""

    threshold: float
    dsc: float
    iou: float
    precision: float
    recall: float
    hd95: Optional[float]

    def metric(self, name: str):
        return getattr(self, name)


@dataclass(frozen=True)
class SweepSummary:
    """Mean and population std per metric over the rows of one sweep.

    Undefined hd95 entries are skipped; ``hd95_skipped`` counts them. When
    every hd95 entry is undefined, its mean and std are ``None``.
    """

    mean: dict[str, Optional[float]]
    std: dict[str, Optional[float]]
    hd95_skipped: int


@dataclass(frozen=True)
class SweepResult:
    rows: tuple[MetricRow, ...]
    summary: SweepSummary


def metric_row(pred: BinaryMask, gt: BinaryMask, tau: float) -> MetricRow:
    """All metrics of one already-thresholded pair, labeled with `tau`."""
    c = confusion(pred, gt)
    dsc_denom = 2 * c.tp + c.fp + c.fn
    union = c.tp + c.fp + c.fn
    precision, recall = precision_recall(pred, gt)
    return MetricRow(
        threshold=tau,
        dsc=1.0 if dsc_denom == 0 else 2.0 * c.tp / dsc_denom,
        iou=1.0 if union == 0 else c.tp / union,
        precision=precision,
        recall=recall,
        hd95=hausdorff95(pred, gt),
    )


def summarize_rows(rows: Sequence[MetricRow]) -> SweepSummary:
    """Mean / population std per metric over `rows`, skipping undefined hd95."""
    if len(rows) == 0:
        raise ValueError("cannot summarize an empty list of metric rows")
    mean: dict[str, Optional[float]] = {}
    std: dict[str, Optional[float]] = {}
    for name in ("dsc", "iou", "precision", "recall"):
        vals = np.array([row.metric(name) for row in rows], dtype=np.float64)
        mean[name] = float(vals.mean())
        std[name] = float(vals.std())
    hd_vals = np.array([row.hd95 for row in rows if row.hd95 is not None], dtype=np.float64)
    skipped = len(rows) - hd_vals.size
    if hd_vals.size == 0:
        mean["hd95"] = None
        std["hd95"] = None
    else:
        mean["hd95"] = float(hd_vals.mean())
        std["hd95"] = float(hd_vals.std())
    return SweepSummary(mean=mean, std=std, hd95_skipped=int(skipped))


def threshold_sweep(
    pred: SoftMask,
    gt: SoftMask,
    thresholds: Sequence[float] = DEFAULT_THRESHOLDS,
) -> SweepResult:
    """Evaluate `pred` against `gt` with both thresholded at each confidence.

    At every threshold tau, prediction and ground truth are binarized at the
    same tau (inclusive) and the full metric row is computed. The summary
    aggregates rows with mean and population std per metric; low stds across
    thresholds indicate a calibrated prediction.
    """
    _check_same_shape(pred, gt)
    thresholds = list(thresholds)
    if len(thresholds) == 0:
        raise ValueError("threshold sweep needs at least one threshold")
    for tau in thresholds:
        if not 0.0 < tau < 1.0:
            raise ValueError(f"sweep thresholds must lie in (0, 1), got {tau}")
    rows = tuple(
        metric_row(threshold(pred, tau), threshold(gt, tau), tau) for tau in thresholds
    )
    return SweepResult(rows=rows, summary=summarize_rows(rows))


@dataclass(frozen=True)
class GedReport:
    """Squared generalized energy distance, decomposed, plus expected DSC.

    ``d2_ged = 2 * expected_distance - diversity`` where
    ``expected_distance`` is the mean IoU distance from annotations to the
    prediction and ``diversity`` the mean pairwise IoU distance among
    annotations (the inter-annotator disagreement).
    """

    d2_ged: float
    expected_distance: float
    diversity: float
    expected_dsc: Optional[float] = None

    @classmethod
    def from_components(
        cls,
        expected_distance: float,
        diversity: float,
        expected_dsc: Optional[float] = None,
    ) -> "GedReport":
        return cls(
            d2_ged=2.0 * expected_distance - diversity,
            expected_distance=expected_distance,
            diversity=diversity,
            expected_dsc=expected_dsc,
        )


def _stack_flat(masks: Sequence[BinaryMask]) -> np.ndarray:
    return np.stack([m.values.reshape(-1) for m in masks]).astype(np.float64)


def _pairwise_iou_distance(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Matrix of 1 - IoU between rows of two stacked flat mask arrays."""
    inter = a @ b.T
    sums_a = a.sum(axis=1)[:, None]
    sums_b = b.sum(axis=1)[None, :]
    union = sums_a + sums_b - inter
    with np.errstate(invalid="ignore", divide="ignore"):
        iou_mat = np.where(union > 0, inter / union, 1.0)
    return 1.0 - iou_mat


def ged_squared_general(
    samples_p: Sequence[BinaryMask],
    samples_q: Sequence[BinaryMask],
) -> float:
    """Plug-in estimate of the squared generalized energy distance.

    ``2 E[d(y, yhat)] - E[d(y, y')] - E[d(yhat, yhat')]`` with all
    expectations taken over ordered pairs of the empirical samples,
    self-pairs included, and d = 1 - IoU.
    """
    samples_p = list(samples_p)
    samples_q = list(samples_q)
    if len(samples_p) == 0 or len(samples_q) == 0:
        raise ValueError("both sample lists must be non-empty")
    shape = samples_p[0].shape
    for m in samples_p + samples_q:
        if m.shape != shape:
            raise ValueError(f"mask shapes differ: {m.shape} vs {shape}")
    a = _stack_flat(samples_p)
    b = _stack_flat(samples_q)
    cross = _pairwise_iou_distance(a, b).mean()
    within_p = _pairwise_iou_distance(a, a).mean()
    within_q = _pairwise_iou_distance(b, b).mean()
    return float(2.0 * cross - within_p - within_q)


def ged_squared_deterministic(annotations: AnnotationSet, pred: BinaryMask) -> GedReport:
    """Squared generalized energy distance for a deterministic prediction.

    With a single predicted mask the prediction-side diversity vanishes and
    the distance reduces to ``2 E[d(y, yhat)] - E[d(y, y')]``. Also reports
    the expected DSC between the prediction and each annotation.
    """
    if annotations.shape != pred.shape:
        raise ValueError(f"mask shapes differ: {annotations.shape} vs {pred.shape}")
    a = _stack_flat(annotations.annotations)
    b = _stack_flat([pred])
    expected_distance = float(_pairwise_iou_distance(a, b).mean())
    diversity = float(_pairwise_iou_distance(a, a).mean())
    expected_dsc = float(np.mean([dice(y, pred) for y in annotations]))
    return GedReport.from_components(expected_distance, diversity, expected_dsc)
