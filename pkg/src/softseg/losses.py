"""Training losses over soft targets: cross-entropy and dice loss.

Cross-entropy between predicted probabilities p and soft targets g is
minimized at p = g, which is what makes it suitable for probabilistic
ground truth. The dice loss ``1 - 2*sum(g*p) / sum(g + p)`` is, for any
pixel with g > 0, monotonically decreasing in p, so its minimum sits at
p = 1 regardless of g: a model trained on it is pushed to binarize its
outputs instead of matching the target probabilities. Both functions
return the loss value together with its analytic gradient with respect
to p so the toy trainer can backpropagate through either.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .masks import SoftMask

#: Probabilities are clamped to [CLAMP_EPS, 1 - CLAMP_EPS] before logs.
CLAMP_EPS = 1e-7


@dataclass(frozen=True)
class LossValue:
    """A scalar loss and its gradient with respect to the prediction raster."""

    value: float
    gradient: np.ndarray


def _coerce_pair(p, g) -> tuple[np.ndarray, np.ndarray]:
    p = p.values if isinstance(p, SoftMask) else np.asarray(p, dtype=np.float64)
    g = g.values if isinstance(g, SoftMask) else np.asarray(g, dtype=np.float64)
    if p.shape != g.shape:
        raise ValueError(f"prediction and target shapes differ: {p.shape} vs {g.shape}")
    return p, g


def cross_entropy(p, g) -> LossValue:
    """Mean binary cross-entropy between probabilities `p` and soft targets `g`.

    ``mean(-(g*ln p + (1-g)*ln(1-p)))`` with p clamped away from {0, 1}.
    The gradient is ``(p - g) / (p * (1 - p)) / n_pixels`` evaluated on the
    clamped values.
    """
    p, g = _coerce_pair(p, g)
    pc = np.clip(p, CLAMP_EPS, 1.0 - CLAMP_EPS)
    value = float(np.mean(-(g * np.log(pc) + (1.0 - g) * np.log1p(-pc))))
    gradient = (pc - g) / (pc * (1.0 - pc)) / p.size
    return LossValue(value=value, gradient=gradient)


def dice_loss(p, g) -> LossValue:
    """Dice loss ``1 - 2*sum(g*p) / sum(g + p)`` over the whole raster.

    No smoothing constants are added; the only singular case, both rasters
    all-zero, is a perfect match by convention (loss 0, gradient 0).
    """
    p, g = _coerce_pair(p, g)
    numer = 2.0 * float(np.sum(g * p))
    denom = float(np.sum(g + p))
    if denom == 0.0:
        return LossValue(value=0.0, gradient=np.zeros_like(p))
    value = 1.0 - numer / denom
    gradient = (numer - 2.0 * g * denom) / (denom * denom)
    return LossValue(value=value, gradient=gradient)


_LOSSES = {"ce": cross_entropy, "dice": dice_loss}


def get_loss(name: str):
    """Resolve the loss selector used by the trainer and CLI ("ce" | "dice")."""
    try:
        return _LOSSES[name]
    except KeyError:
        raise ValueError(f"unknown loss {name!r}; expected one of {sorted(_LOSSES)}") from None
