"""Minimal reverse-mode autodiff over float64 numpy arrays.

A :class:`Tensor` records the operation that produced it as a backward
closure plus references to its parents; calling :func:`backprop` on the
graph root walks the nodes in reverse topological order and accumulates
gradients, micrograd-style. Only the handful of ops the tiny segmentation
network needs are provided, each batched over (N, C, H, W) arrays.

Everything is 64-bit so gradient checks against central finite differences
can be held to tight tolerances.
"""

from __future__ import annotations

import numpy as np
from scipy.special import expit


class Tensor:
    """A value array, its gradient, and the backward rule that produced it."""

    __slots__ = ("data", "grad", "_backward", "_parents")

    def __init__(self, data, parents=()):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad: np.ndarray | None = None
        self._backward = None
        self._parents = tuple(parents)

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    def __repr__(self) -> str:
        return f"Tensor(shape={self.data.shape})"


def _topo_order(root: Tensor) -> list[Tensor]:
    order: list[Tensor] = []
    visited: set[int] = set()
    stack = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in visited:
            continue
        visited.add(id(node))
        stack.append((node, True))
        for parent in node._parents:
            if id(parent) not in visited:
                stack.append((parent, False))
    return order


def backprop(root: Tensor, seed: np.ndarray) -> None:
    """Accumulate d(root·seed)/d(node) into every node reachable from `root`."""
    seed = np.asarray(seed, dtype=np.float64)
    if seed.shape != root.data.shape:
        raise ValueError(f"seed gradient shape {seed.shape} != output shape {root.data.shape}")
    order = _topo_order(root)
    for node in order:
        node.grad = np.zeros_like(node.data)
    root.grad = seed.copy()
    for node in reversed(order):
        if node._backward is not None:
            node._backward()


def _windows3x3(padded: np.ndarray) -> np.ndarray:
    """(N, C, H+2, W+2) -> read-only (N, C, H, W, 3, 3) sliding-window view."""
    n, c, hp, wp = padded.shape
    s = padded.strides
    return np.lib.stride_tricks.as_strided(
        padded,
        shape=(n, c, hp - 2, wp - 2, 3, 3),
        strides=(s[0], s[1], s[2], s[3], s[2], s[3]),
        writeable=False,
    )


def conv3x3(x: Tensor, w: Tensor, b: Tensor) -> Tensor:
    """3x3 convolution, stride 1, zero padding 1. w: (O, C, 3, 3), b: (O,)."""
    xp = np.pad(x.data, ((0, 0), (0, 0), (1, 1), (1, 1)))
    win = _windows3x3(xp)
    out_data = np.tensordot(win, w.data, axes=((1, 4, 5), (1, 2, 3)))
    out_data = out_data.transpose(0, 3, 1, 2) + b.data[None, :, None, None]
    out = Tensor(out_data, parents=(x, w, b))

    def _backward():
        g = out.grad
        b.grad += g.sum(axis=(0, 2, 3))
        w.grad += np.tensordot(g, win, axes=((0, 2, 3), (0, 2, 3)))
        gp = np.pad(g, ((0, 0), (0, 0), (1, 1), (1, 1)))
        gwin = _windows3x3(gp)
        flipped = w.data[:, :, ::-1, ::-1]
        gx = np.tensordot(gwin, flipped, axes=((1, 4, 5), (0, 2, 3)))
        x.grad += gx.transpose(0, 3, 1, 2)

    out._backward = _backward
    return out


def conv1x1(x: Tensor, w: Tensor, b: Tensor) -> Tensor:
    """Pointwise convolution. w: (O, C, 1, 1), b: (O,)."""
    kernel = w.data[:, :, 0, 0]
    out_data = np.tensordot(x.data, kernel, axes=((1,), (1,)))
    out_data = out_data.transpose(0, 3, 1, 2) + b.data[None, :, None, None]
    out = Tensor(out_data, parents=(x, w, b))

    def _backward():
        g = out.grad
        b.grad += g.sum(axis=(0, 2, 3))
        w.grad[:, :, 0, 0] += np.tensordot(g, x.data, axes=((0, 2, 3), (0, 2, 3)))
        gx = np.tensordot(g, kernel, axes=((1,), (0,)))
        x.grad += gx.transpose(0, 3, 1, 2)

    out._backward = _backward
    return out


def relu(x: Tensor) -> Tensor:
    out = Tensor(np.maximum(x.data, 0.0), parents=(x,))

    def _backward():
        x.grad += (x.data > 0.0) * out.grad

    out._backward = _backward
    return out


def sigmoid(x: Tensor) -> Tensor:
    s = expit(x.data)
    out = Tensor(s, parents=(x,))

    def _backward():
        x.grad += s * (1.0 - s) * out.grad

    out._backward = _backward
    return out


def clip_interval(x: Tensor, lo: float, hi: float) -> Tensor:
    """Clamp values to [lo, hi]; gradient passes through where unclamped."""
    out = Tensor(np.clip(x.data, lo, hi), parents=(x,))

    def _backward():
        inside = (x.data > lo) & (x.data < hi)
        x.grad += inside * out.grad

    out._backward = _backward
    return out


def avg_pool2(x: Tensor) -> Tensor:
    """2x2 mean pooling; spatial dims must be even."""
    n, c, h, w = x.data.shape
    if h % 2 or w % 2:
        raise ValueError(f"avg_pool2 needs even spatial dims, got {h}x{w}")
    out_data = x.data.reshape(n, c, h // 2, 2, w // 2, 2).mean(axis=(3, 5))
    out = Tensor(out_data, parents=(x,))

    def _backward():
        g = out.grad * 0.25
        x.grad += np.repeat(np.repeat(g, 2, axis=2), 2, axis=3)

    out._backward = _backward
    return out


def upsample_nearest2(x: Tensor) -> Tensor:
    """2x nearest-neighbor upsampling."""
    out_data = np.repeat(np.repeat(x.data, 2, axis=2), 2, axis=3)
    out = Tensor(out_data, parents=(x,))

    def _backward():
        n, c, h, w = x.data.shape
        x.grad += out.grad.reshape(n, c, h, 2, w, 2).sum(axis=(3, 5))

    out._backward = _backward
    return out


def concat_channels(a: Tensor, b: Tensor) -> Tensor:
    """Concatenate along the channel axis (skip connections)."""
    out = Tensor(np.concatenate([a.data, b.data], axis=1), parents=(a, b))
    split = a.data.shape[1]

    def _backward():
        a.grad += out.grad[:, :split]
        b.grad += out.grad[:, split:]

    out._backward = _backward
    return out
