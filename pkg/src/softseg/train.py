"""Deterministic training loop for the tiny segmentation network.

Targets are the fused soft labels. Each epoch shuffles the training cases
from a per-epoch RNG substream, assembles batches, optionally grows them
with augmented copies, and takes one Adam step per batch with a cosine-
annealed learning rate over the full run. After every epoch the validation
cases are swept across the confidence thresholds and the DSC mean/std are
recorded, which is the calibration signal the loss comparison relies on.

Given equal seeds and configs, runs are bit-identical (single-threaded).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .augment import grow_batch
from .autodiff import Tensor
from .losses import LossValue, get_loss
from .masks import SoftMask
from .metrics import threshold_sweep
from .optim import CosineSchedule, adam_step, cosine_lr, init_adam
from .rng import stream
from .unet import TinyUNetConfig, backward, forward_batch, init_params


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 40
    batch_size: int = 8
    seed: int = 0
    loss: str = "ce"
    augment: bool = True
    vflip_prob: float = 0.5
    lr_start: float = 1e-2
    lr_end: float = 1e-4

    def __post_init__(self):
        if self.epochs < 1:
            raise ValueError(f"epochs must be >= 1, got {self.epochs}")
        if self.batch_size < 1:
            raise ValueError(f"batch_size must be >= 1, got {self.batch_size}")
        get_loss(self.loss)

    def to_dict(self) -> dict:
        return {
            "epochs": self.epochs,
            "batch_size": self.batch_size,
            "seed": self.seed,
            "loss": self.loss,
            "augment": {
                "enabled": self.augment,
                "vflip_prob": self.vflip_prob,
                "translate": 0.10,
                "rotate_deg": 15.0,
                "zoom": [0.90, 1.10],
                "hflip_prob": 0.5,
            },
            "lr_start": self.lr_start,
            "lr_end": self.lr_end,
        }


@dataclass(frozen=True)
class Sample:
    case_id: str
    image: np.ndarray  # (H, W) float64
    label: np.ndarray  # (H, W) float64, the fused soft target


@dataclass(frozen=True)
class SplitDataset:
    train: tuple[Sample, ...]
    val: tuple[Sample, ...]

    def __post_init__(self):
        if len(self.train) == 0:
            raise ValueError("training split is empty")
        if len(self.val) == 0:
            raise ValueError("validation split is empty")
        shape = self.train[0].image.shape
        for s in self.train + self.val:
            if s.image.shape != shape or s.label.shape != shape:
                raise ValueError(
                    f"case {s.case_id}: shape {s.image.shape}/{s.label.shape} "
                    f"differs from {shape}; all cases must be shape-compatible"
                )


@dataclass(frozen=True)
class EpochStats:
    epoch: int
    lr: float
    train_loss: float
    val_dsc_mean: float
    val_dsc_std: float


class TrainingDiverged(RuntimeError):
    """Raised when a non-finite or saturated value shows up mid-training."""

    def __init__(self, epoch: int, step: int, message: str):
        super().__init__(f"epoch {epoch}, step {step}: {message}")
        self.epoch = epoch
        self.step = step


def batch_loss(loss_fn, probs: np.ndarray, labels: np.ndarray) -> LossValue:
    """Mean of per-image losses; gradient laid out like the (B, 1, H, W) probs."""
    count = probs.shape[0]
    grads = np.empty_like(probs)
    values = np.empty(count)
    for i in range(count):
        lv = loss_fn(probs[i, 0], labels[i])
        values[i] = lv.value
        grads[i, 0] = lv.gradient
    return LossValue(value=float(values.mean()), gradient=grads / count)


def predict(config: TinyUNetConfig, params: dict[str, Tensor], image: np.ndarray) -> SoftMask:
    """Probability map for one (H, W) image, discarding the tape."""
    image = np.asarray(image, dtype=np.float64)
    probs, _ = forward_batch(config, params, image[None, None])
    return SoftMask(probs.data[0, 0])


def _check_step(probs: np.ndarray, loss_value: float, epoch: int, step: int) -> None:
    if not np.isfinite(loss_value):
        raise TrainingDiverged(epoch, step, f"loss is {loss_value}")
    pmin, pmax = probs.min(), probs.max()
    if not np.isfinite(pmin) or not np.isfinite(pmax):
        raise TrainingDiverged(epoch, step, "non-finite network output")
    if pmin <= 0.0 or pmax >= 1.0:
        raise TrainingDiverged(
            epoch, step, f"network output left (0, 1): range [{pmin}, {pmax}]"
        )


def _validation_dsc(
    model_config: TinyUNetConfig, params: dict[str, Tensor], val: tuple[Sample, ...]
) -> tuple[float, float]:
    means = []
    stds = []
    for sample in val:
        probs = predict(model_config, params, sample.image)
        result = threshold_sweep(probs, SoftMask(sample.label))
        means.append(result.summary.mean["dsc"])
        stds.append(result.summary.std["dsc"])
    return float(np.mean(means)), float(np.mean(stds))


def train(
    dataset: SplitDataset,
    model_config: TinyUNetConfig,
    train_config: TrainConfig,
) -> tuple[dict[str, Tensor], list[EpochStats]]:
    """Train on the fused soft labels; returns final params and epoch history."""
    loss_fn = get_loss(train_config.loss)
    seed = train_config.seed
    params = init_params(model_config, stream(seed, "init"))
    adam = init_adam(params)

    n_train = len(dataset.train)
    steps_per_epoch = (n_train + train_config.batch_size - 1) // train_config.batch_size
    schedule = CosineSchedule(
        total_steps=train_config.epochs * steps_per_epoch,
        lr_start=train_config.lr_start,
        lr_end=train_config.lr_end,
    )
    images = np.stack([s.image for s in dataset.train])[:, None]  # (N, 1, H, W)
    labels = np.stack([s.label for s in dataset.train])

    history: list[EpochStats] = []
    global_step = 0
    for epoch in range(train_config.epochs):
        order = stream(seed, "batching", epoch).permutation(n_train)
        epoch_losses = []
        epoch_lr = cosine_lr(schedule, global_step)
        for batch_index in range(steps_per_epoch):
            idx = order[
                batch_index * train_config.batch_size : (batch_index + 1) * train_config.batch_size
            ]
            batch_images, batch_labels = grow_batch(
                images[idx],
                labels[idx],
                stream(seed, "augment", epoch, batch_index),
                vflip_prob=train_config.vflip_prob,
                enabled=train_config.augment,
            )
            probs, tape = forward_batch(model_config, params, batch_images)
            loss = batch_loss(loss_fn, probs.data, batch_labels)
            _check_step(probs.data, loss.value, epoch, global_step)
            grads = backward(tape, loss)
            adam_step(adam, params, grads, cosine_lr(schedule, global_step))
            global_step += 1
            epoch_losses.append(loss.value)
        val_mean, val_std = _validation_dsc(model_config, params, dataset.val)
        history.append(
            EpochStats(
                epoch=epoch,
                lr=float(epoch_lr),
                train_loss=float(np.mean(epoch_losses)),
                val_dsc_mean=val_mean,
                val_dsc_std=val_std,
            )
        )
    return params, history
