"""softseg: soft labels from multi-annotator masks, calibration-aware
evaluation, and a from-scratch toy segmentation trainer."""

from .masks import (
    AnnotationSet,
    BinaryMask,
    GranularitySet,
    SoftMask,
    fuse_mean,
    granularity,
    threshold,
    variance_map,
)
from .metrics import (
    DEFAULT_THRESHOLDS,
    ConfusionCounts,
    GedReport,
    MetricRow,
    SweepResult,
    SweepSummary,
    confusion,
    dice,
    ged_squared_deterministic,
    ged_squared_general,
    hausdorff95,
    iou,
    iou_distance,
    precision_recall,
    threshold_sweep,
)
from .losses import LossValue, cross_entropy, dice_loss, get_loss
from .optim import AdamState, CosineSchedule, adam_step, cosine_lr, init_adam
from .unet import (
    TinyUNetConfig,
    backward,
    forward,
    forward_batch,
    init_params,
    kaiming_init,
    parameter_count,
    xavier_init,
)
from .augment import AugmentParams, apply, grow_batch, sample_params
from .train import (
    EpochStats,
    Sample,
    SplitDataset,
    TrainConfig,
    TrainingDiverged,
    predict,
    train,
)
from .synth import SynthConfig, generate_case, generate_synthetic

__version__ = "0.1.0"

__all__ = [
    "AnnotationSet",
    "BinaryMask",
    "GranularitySet",
    "SoftMask",
    "fuse_mean",
    "granularity",
    "threshold",
    "variance_map",
    "DEFAULT_THRESHOLDS",
    "ConfusionCounts",
    "GedReport",
    "MetricRow",
    "SweepResult",
    "SweepSummary",
    "confusion",
    "dice",
    "ged_squared_deterministic",
    "ged_squared_general",
    "hausdorff95",
    "iou",
    "iou_distance",
    "precision_recall",
    "threshold_sweep",
    "LossValue",
    "cross_entropy",
    "dice_loss",
    "get_loss",
    "AdamState",
    "CosineSchedule",
    "adam_step",
    "cosine_lr",
    "init_adam",
    "TinyUNetConfig",
    "backward",
    "forward",
    "forward_batch",
    "init_params",
    "kaiming_init",
    "parameter_count",
    "xavier_init",
    "AugmentParams",
    "apply",
    "grow_batch",
    "sample_params",
    "EpochStats",
    "Sample",
    "SplitDataset",
    "TrainConfig",
    "TrainingDiverged",
    "predict",
    "train",
    "SynthConfig",
    "generate_case",
    "generate_synthetic",
    "__version__",
]
