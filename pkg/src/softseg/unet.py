"""A tiny U-Net-style encoder-decoder over the from-scratch autodiff engine.

The encoder is `depth` blocks of [conv3x3 + ReLU + 2x mean-pool]; the
decoder mirrors it with [2x nearest upsample + skip concatenation + conv3x3
+ ReLU]; a 1x1 convolution plus sigmoid produces per-pixel foreground
probabilities at the input resolution. Channel width doubles per level,
starting from `base_channels` at the highest resolution.

Hidden convolutions are Kaiming-initialized, the output layer is Xavier-
initialized, biases start at zero.

Output probabilities are clamped to [PROB_EPS, 1 - PROB_EPS]: dice-loss
training drives logits far enough that a float64 sigmoid would otherwise
round to exactly 0 or 1, violating the strict open-range output contract.
The clamp engages only at |logit| > ~27, where the sigmoid derivative is
below 1e-12, so gradients are unaffected anywhere a gradient check runs.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .losses import LossValue
from .masks import SoftMask

#: Half-width of the exclusion zone around 0 and 1 in the output clamp.
PROB_EPS = 1e-12


@dataclass(frozen=True)
class TinyUNetConfig:
    input_channels: int = 1
    base_channels: int = 16
    depth: int = 2

    def __post_init__(self):
        if self.input_channels < 1:
            raise ValueError(f"input_channels must be >= 1, got {self.input_channels}")
        if self.base_channels < 1:
            raise ValueError(f"base_channels must be >= 1, got {self.base_channels}")
        if self.depth < 1:
            raise ValueError(f"depth must be >= 1, got {self.depth}")

    @property
    def scale(self) -> int:
        """Spatial dims of inputs must be divisible by this (2**depth)."""
        return 2**self.depth

    def to_dict(self) -> dict:
        return {
            "input_channels": self.input_channels,
            "base_channels": self.base_channels,
            "depth": self.depth,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "TinyUNetConfig":
        return cls(
            input_channels=int(d["input_channels"]),
            base_channels=int(d["base_channels"]),
            depth=int(d["depth"]),
        )


@dataclass(frozen=True)
class ParamSpec:
    name: str
    shape: tuple[int, ...]
    init: str  # "kaiming" | "xavier" | "zero"
    fan_in: int
    fan_out: int


def parameter_spec(config: TinyUNetConfig) -> list[ParamSpec]:
    """Ordered list of every parameter's name, shape, and init rule."""
    base, depth = config.base_channels, config.depth
    spec: list[ParamSpec] = []

    def conv(name: str, cin: int, cout: int, k: int, init: str):
        spec.append(
            ParamSpec(f"{name}.w", (cout, cin, k, k), init, fan_in=cin * k * k, fan_out=cout * k * k)
        )
        spec.append(ParamSpec(f"{name}.b", (cout,), "zero", fan_in=cin * k * k, fan_out=cout * k * k))

    for i in range(depth):
        cin = config.input_channels if i == 0 else base * 2 ** (i - 1)
        conv(f"enc{i}", cin, base * 2**i, 3, "kaiming")
    for i in reversed(range(depth)):
        carried = base * 2 ** (depth - 1) if i == depth - 1 else base * 2 ** (i + 1)
        conv(f"dec{i}", carried + base * 2**i, base * 2**i, 3, "kaiming")
    conv("out", base, 1, 1, "xavier")
    return spec


def parameter_count(config: TinyUNetConfig) -> int:
    """Total number of scalar parameters, a pure function of the config."""
    return sum(int(np.prod(p.shape)) for p in parameter_spec(config))


def kaiming_init(shape, fan_in: int, rng: np.random.Generator) -> Tensor:
    """Zero-mean normal with std sqrt(2 / fan_in), for hidden ReLU layers."""
    if fan_in <= 0:
        raise ValueError(f"fan_in must be positive, got {fan_in}")
    std = np.sqrt(2.0 / fan_in)
    return Tensor(rng.normal(0.0, std, size=shape))


def xavier_init(shape, fan_in: int, fan_out: int, rng: np.random.Generator) -> Tensor:
    """Uniform in +-sqrt(6 / (fan_in + fan_out)), for the output layer."""
    if fan_in <= 0 or fan_out <= 0:
        raise ValueError(f"fans must be positive, got fan_in={fan_in}, fan_out={fan_out}")
    bound = np.sqrt(6.0 / (fan_in + fan_out))
    return Tensor(rng.uniform(-bound, bound, size=shape))


def init_params(config: TinyUNetConfig, rng: np.random.Generator) -> dict[str, Tensor]:
    """Draw all parameters in canonical order from one generator."""
    params: dict[str, Tensor] = {}
    for p in parameter_spec(config):
        if p.init == "kaiming":
            params[p.name] = kaiming_init(p.shape, p.fan_in, rng)
        elif p.init == "xavier":
            params[p.name] = xavier_init(p.shape, p.fan_in, p.fan_out, rng)
        else:
            params[p.name] = Tensor(np.zeros(p.shape))
    return params


class Tape:
    """The recorded forward graph: network output plus the parameters used."""

    def __init__(self, output: Tensor, params: dict[str, Tensor]):
        self.output = output
        self.params = params
        self._consumed = False


def _check_spatial(config: TinyUNetConfig, h: int, w: int) -> None:
    s = config.scale
    if h % s or w % s:
        pad_h = (s - h % s) % s
        pad_w = (s - w % s) % s
        raise ValueError(
            f"input spatial dims {h}x{w} must be divisible by {s} (depth {config.depth}); "
            f"pad to {h + pad_h}x{w + pad_w}"
        )


def forward_batch(
    config: TinyUNetConfig, params: dict[str, Tensor], images: np.ndarray
) -> tuple[Tensor, Tape]:
    """Run the network on a (N, C, H, W) batch; probabilities are (N, 1, H, W)."""
    images = np.asarray(images, dtype=np.float64)
    if images.ndim != 4 or images.shape[1] != config.input_channels:
        raise ValueError(
            f"expected images of shape (N, {config.input_channels}, H, W), got {images.shape}"
        )
    _check_spatial(config, images.shape[2], images.shape[3])

    h = Tensor(images)
    skips: list[Tensor] = []
    for i in range(config.depth):
        h = ad.relu(ad.conv3x3(h, params[f"enc{i}.w"], params[f"enc{i}.b"]))
        skips.append(h)
        h = ad.avg_pool2(h)
    for i in reversed(range(config.depth)):
        h = ad.upsample_nearest2(h)
        h = ad.concat_channels(h, skips[i])
        h = ad.relu(ad.conv3x3(h, params[f"dec{i}.w"], params[f"dec{i}.b"]))
    probs = ad.clip_interval(
        ad.sigmoid(ad.conv1x1(h, params["out.w"], params["out.b"])),
        PROB_EPS,
        1.0 - PROB_EPS,
    )
    return probs, Tape(probs, params)


def forward(
    config: TinyUNetConfig, params: dict[str, Tensor], image: np.ndarray
) -> tuple[SoftMask, Tape]:
    """Run the network on one image, (H, W) or (C, H, W)."""
    image = np.asarray(image, dtype=np.float64)
    if image.ndim == 2:
        image = image[None, :, :]
    if image.ndim != 3:
        raise ValueError(f"expected a (H, W) or (C, H, W) image, got shape {image.shape}")
    probs, tape = forward_batch(config, params, image[None])
    return SoftMask(probs.data[0, 0]), tape


def backward(tape: Tape, loss: LossValue) -> dict[str, np.ndarray]:
    """Backpropagate a loss gradient through the tape; returns per-parameter grads."""
    if tape._consumed:
        raise ValueError("tape already consumed; run forward again before backward")
    seed = np.asarray(loss.gradient, dtype=np.float64)
    if seed.size != tape.output.data.size:
        raise ValueError(
            f"loss gradient has {seed.size} elements, network output has "
            f"{tape.output.data.size}"
        )
    ad.backprop(tape.output, seed.reshape(tape.output.data.shape))
    tape._consumed = True
    return {name: p.grad.copy() for name, p in tape.params.items()}
