"""Group-aware deep imbalanced regression with classification-guided experts."""

__version__ = "0.1.0"

from .datagen import Dataset, SynthConfig, generate
from .evaluation import MetricsReport, full_report
from .grouping import GroupingScheme, make_grouping
from .model import ModelParams, load_checkpoint, save_checkpoint
from .training import TrainConfig, predict, predict_gt_guided, train

__all__ = [
    "Dataset",
    "GroupingScheme",
    "MetricsReport",
    "ModelParams",
    "SynthConfig",
    "TrainConfig",
    "full_report",
    "generate",
    "load_checkpoint",
    "make_grouping",
    "predict",
    "predict_gt_guided",
    "save_checkpoint",
    "train",
]
