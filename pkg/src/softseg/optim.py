"""Adam with bias correction and a cosine-annealed learning rate."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .autodiff import Tensor


@dataclass
class AdamState:
    """Per-parameter first/second moment estimates and the step counter.

    `weight_decay` is carried for completeness but stays at 0; the update
    applies no decay term.
    """

    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    weight_decay: float = 0.0
    t: int = 0
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)


def init_adam(
    params: dict[str, Tensor],
    beta1: float = 0.9,
    beta2: float = 0.999,
    eps: float = 1e-8,
) -> AdamState:
    state = AdamState(beta1=beta1, beta2=beta2, eps=eps)
    for name, p in params.items():
        state.m[name] = np.zeros_like(p.data)
        state.v[name] = np.zeros_like(p.data)
    return state


def adam_step(
    state: AdamState,
    params: dict[str, Tensor],
    grads: dict[str, np.ndarray],
    lr: float,
) -> None:
    """One bias-corrected Adam update, in place on `params` and `state`."""
    if set(grads) != set(params):
        raise ValueError("gradient keys do not match parameter keys")
    state.t += 1
    bc1 = 1.0 - state.beta1**state.t
    bc2 = 1.0 - state.beta2**state.t
    for name, p in params.items():
        g = grads[name]
        if g.shape != p.data.shape:
            raise ValueError(
                f"gradient shape {g.shape} does not match parameter {name!r} "
                f"shape {p.data.shape}"
            )
        m = state.m[name]
        v = state.v[name]
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * (g * g)
        m_hat = m / bc1
        v_hat = v / bc2
        p.data -= lr * m_hat / (np.sqrt(v_hat) + state.eps)


@dataclass(frozen=True)
class CosineSchedule:
    """Cosine annealing from `lr_start` at step 0 to `lr_end` at `total_steps`."""

    total_steps: int
    lr_start: float = 1e-2
    lr_end: float = 1e-4

    def __post_init__(self):
        if self.total_steps < 1:
            raise ValueError(f"total_steps must be >= 1, got {self.total_steps}")
        if not self.lr_start > self.lr_end > 0.0:
            raise ValueError(
                f"need lr_start > lr_end > 0, got {self.lr_start}, {self.lr_end}"
            )


def cosine_lr(schedule: CosineSchedule, step: int) -> float:
    """lr_end + 0.5 * (lr_start - lr_end) * (1 + cos(pi * step / total_steps))."""
    if not 0 <= step <= schedule.total_steps:
        raise ValueError(
            f"step {step} outside schedule range [0, {schedule.total_steps}]"
        )
    span = schedule.lr_start - schedule.lr_end
    return schedule.lr_end + 0.5 * span * (1.0 + np.cos(np.pi * step / schedule.total_steps))
