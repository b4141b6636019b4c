"""Raster mask types and multi-annotator fusion.

Masks are immutable wrappers around 2D numpy arrays in row-major (height,
width) layout, single channel. A :class:`BinaryMask` holds one annotator's
segmentation or a thresholded prediction; a :class:`SoftMask` holds per-pixel
foreground probabilities, either fused ground truth or model output.

Fusing N binary annotations by averaging yields values on the grid
``{i/N : 0 <= i <= N}``. Vote counts are accumulated in int64 and divided by
N in float64, so fused values are bit-identical to the grid levels computed
the same way.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


def _check_2d(values: np.ndarray, what: str) -> None:
    if values.ndim != 2:
        raise ValueError(f"{what} must be a 2D (height, width) raster, got shape {values.shape}")
    if values.shape[0] < 1 or values.shape[1] < 1:
        raise ValueError(f"{what} must have width >= 1 and height >= 1, got shape {values.shape}")


@dataclass(frozen=True, eq=False)
class BinaryMask:
    """A {0,1}-valued raster, shape (height, width), dtype uint8."""

    values: np.ndarray

    def __post_init__(self):
        values = np.asarray(self.values)
        _check_2d(values, "BinaryMask")
        if values.dtype == bool:
            values = values.astype(np.uint8)
        if not np.isin(values, (0, 1)).all():
            bad = values[~np.isin(values, (0, 1))].flat[0]
            raise ValueError(f"BinaryMask values must be 0 or 1, found {bad!r}")
        values = np.ascontiguousarray(values, dtype=np.uint8)
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    @property
    def width(self) -> int:
        return self.values.shape[1]

    @property
    def height(self) -> int:
        return self.values.shape[0]

    @property
    def shape(self) -> tuple[int, int]:
        return self.values.shape

    def is_empty(self) -> bool:
        return not self.values.any()


@dataclass(frozen=True, eq=False)
class SoftMask:
    """A [0,1]-valued probability raster, shape (height, width), dtype float64."""

    values: np.ndarray

    def __post_init__(self):
        values = np.ascontiguousarray(self.values, dtype=np.float64)
        _check_2d(values, "SoftMask")
        if not np.isfinite(values).all():
            raise ValueError("SoftMask values must be finite")
        if values.min() < 0.0 or values.max() > 1.0:
            raise ValueError(
                f"SoftMask values must lie in [0, 1], found range "
                f"[{values.min()}, {values.max()}]"
            )
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    @property
    def width(self) -> int:
        return self.values.shape[1]

    @property
    def height(self) -> int:
        return self.values.shape[0]

    @property
    def shape(self) -> tuple[int, int]:
        return self.values.shape


@dataclass(frozen=True, eq=False)
class AnnotationSet:
    """N >= 1 same-shaped binary masks for one image.

    The set is the empirical distribution of plausible segmentations for the
    image; fusing it yields the soft ground truth.
    """

    annotations: tuple[BinaryMask, ...]

    def __init__(self, annotations):
        annotations = tuple(annotations)
        if len(annotations) == 0:
            raise ValueError("AnnotationSet needs at least one annotation")
        ref = annotations[0].shape
        for i, mask in enumerate(annotations):
            if not isinstance(mask, BinaryMask):
                raise TypeError(f"annotation {i} is not a BinaryMask")
            if mask.shape != ref:
                raise ValueError(
                    f"annotation {i} has shape {mask.shape}, expected {ref} "
                    f"(all annotations of a case must share the image shape)"
                )
        object.__setattr__(self, "annotations", annotations)

    def __len__(self) -> int:
        return len(self.annotations)

    def __iter__(self):
        return iter(self.annotations)

    @property
    def shape(self) -> tuple[int, int]:
        return self.annotations[0].shape

    def stacked(self) -> np.ndarray:
        """All annotations as one (N, height, width) uint8 array."""
        return np.stack([m.values for m in self.annotations])


@dataclass(frozen=True)
class GranularitySet:
    """The N+1 probability levels {i/N} reachable by fusing N annotations."""

    n_annotators: int
    levels: np.ndarray

    def __contains__(self, value: float) -> bool:
        return bool(np.any(self.levels == value))

    def contains(self, values: np.ndarray) -> np.ndarray:
        """Element-wise exact membership of `values` in the level grid."""
        return np.isin(np.asarray(values), self.levels)

    def __len__(self) -> int:
        return len(self.levels)


def granularity(n_annotators: int) -> GranularitySet:
    """Levels {0, 1/n, ..., 1} reachable when fusing `n_annotators` masks."""
    if n_annotators < 1:
        raise ValueError(f"n_annotators must be >= 1, got {n_annotators}")
    levels = np.arange(n_annotators + 1, dtype=np.float64) / np.float64(n_annotators)
    levels.setflags(write=False)
    return GranularitySet(n_annotators=int(n_annotators), levels=levels)


def fuse_mean(annotations: AnnotationSet) -> SoftMask:
    """Average N binary annotations into a per-pixel foreground probability.

    Votes are summed exactly (int64) and divided by N once, so every output
    value is a bit-exact member of ``granularity(N)``.
    """
    counts = annotations.stacked().sum(axis=0, dtype=np.int64)
    return SoftMask(counts / np.float64(len(annotations)))


def variance_map(mean: SoftMask) -> np.ndarray:
    """Per-pixel vote variance derived from the fused mean.

    Binary votes satisfy x^2 = x, so the population variance at each pixel
    is mean - mean^2. Output lies in [0, 0.25].
    """
    v = mean.values
    return v - v * v


def threshold(mask: SoftMask, tau: float) -> BinaryMask:
    """Binarize a soft mask at confidence tau, foreground where value >= tau.

    The comparison is inclusive so that a 50% tie among an even number of
    annotators deterministically lands in the foreground.
    """
    if not 0.0 < tau < 1.0:
        raise ValueError(f"threshold tau must lie in (0, 1), got {tau}")
    return BinaryMask((mask.values >= tau).astype(np.uint8))
