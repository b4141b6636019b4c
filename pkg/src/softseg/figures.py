"""Matplotlib figures rendered next to the delimited report files.

Every renderer draws to an in-memory PNG and goes through the same atomic
write as the CSV/JSON reports. Metadata is pinned so the bytes depend only
on the plotted data, keeping figure output inside the determinism contract
of the pipeline.
"""

from __future__ import annotations

import io
from pathlib import Path
from typing import Optional, Sequence

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .dataio import atomic_write_bytes
from .metrics import GedReport, MetricRow

_PNG_METADATA = {"Software": "softseg"}
_DPI = 150


def _save(fig, path) -> Path:
    buf = io.BytesIO()
    fig.savefig(buf, format="png", dpi=_DPI, metadata=_PNG_METADATA, bbox_inches="tight")
    plt.close(fig)
    path = Path(path)
    atomic_write_bytes(path, buf.getvalue())
    return path


def render_sweep_figure(
    case_rows: Sequence[tuple[str, Sequence[MetricRow]]], path
) -> Path:
    """Metric-vs-threshold curves averaged over cases, plus the HD95 curve.

    Flat overlap curves across thresholds are the visual signature of a
    calibrated prediction. HD95 points average only the cases where the
    distance is defined at that threshold.
    """
    thresholds = [row.threshold for row in case_rows[0][1]]
    fig, (ax_overlap, ax_dist) = plt.subplots(1, 2, figsize=(9.0, 3.4))

    for name, label in (("dsc", "DSC"), ("iou", "IoU"),
                        ("precision", "precision"), ("recall", "recall")):
        curve = [
            np.mean([row.metric(name) for _, rows in case_rows for row in rows
                     if row.threshold == tau])
            for tau in thresholds
        ]
        ax_overlap.plot(thresholds, curve, marker="o", markersize=3, label=label)
    ax_overlap.set_xlabel("confidence threshold")
    ax_overlap.set_ylabel("metric")
    ax_overlap.set_ylim(-0.02, 1.02)
    ax_overlap.legend(fontsize=8)
    ax_overlap.set_title("overlap metrics across thresholds")

    hd_means = []
    for tau in thresholds:
        defined = [
            row.hd95 for _, rows in case_rows for row in rows
            if row.threshold == tau and row.hd95 is not None
        ]
        hd_means.append(np.mean(defined) if defined else np.nan)
    ax_dist.plot(thresholds, hd_means, marker="s", markersize=3, color="tab:red")
    ax_dist.set_xlabel("confidence threshold")
    ax_dist.set_ylabel("95% HD [pixels]")
    ax_dist.set_title("surface distance across thresholds")

    fig.tight_layout()
    return _save(fig, path)


def render_ged_figure(ged_reports: Sequence[tuple[str, GedReport]], path) -> Path:
    """Per-case decomposition of the squared generalized energy distance."""
    cases = [case_id for case_id, _ in ged_reports]
    x = np.arange(len(cases))
    width = 0.27
    fig, ax = plt.subplots(figsize=(max(4.0, 0.55 * len(cases) + 1.5), 3.4))
    ax.bar(x - width, [r.d2_ged for _, r in ged_reports], width, label="$D^2_{GED}$")
    ax.bar(x, [r.expected_distance for _, r in ged_reports], width,
           label="E[d(y, pred)]")
    ax.bar(x + width, [r.diversity for _, r in ged_reports], width,
           label="diversity E[d(y, y')]")
    ax.set_xticks(x)
    ax.set_xticklabels(cases, rotation=60, ha="right", fontsize=7)
    ax.set_ylabel("IoU distance")
    ax.legend(fontsize=8)
    ax.set_title("energy distance decomposition per case")
    fig.tight_layout()
    return _save(fig, path)


def render_history_figure(history, path, loss_name: Optional[str] = None) -> Path:
    """Training loss and validation sweep-DSC (mean with a +-std band)."""
    epochs = [h.epoch for h in history]
    fig, (ax_loss, ax_dsc) = plt.subplots(1, 2, figsize=(9.0, 3.4))

    ax_loss.plot(epochs, [h.train_loss for h in history], color="tab:blue")
    ax_loss.set_xlabel("epoch")
    ax_loss.set_ylabel("training loss" + (f" ({loss_name})" if loss_name else ""))
    ax_loss.set_title("training loss")

    mean = np.array([h.val_dsc_mean for h in history])
    std = np.array([h.val_dsc_std for h in history])
    ax_dsc.plot(epochs, mean, color="tab:green")
    ax_dsc.fill_between(epochs, mean - std, mean + std, color="tab:green", alpha=0.25)
    ax_dsc.set_xlabel("epoch")
    ax_dsc.set_ylabel("validation DSC across thresholds")
    ax_dsc.set_ylim(-0.02, 1.02)
    ax_dsc.set_title("sweep DSC (mean $\\pm$ std)")

    fig.tight_layout()
    return _save(fig, path)
