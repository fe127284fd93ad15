"""Imbalance-harmonizing segmentation losses, the output imbalance index and OII-guided search."""

from .metrics import (
    ConfusionCounts,
    UndefinedRatioError,
    confusion_from_masks,
    soft_confusion,
    iou,
    pixel_accuracy,
    fp_fn_ratio,
    oii,
    oii_scale,
    summarize,
)
from .losses import Family, LossConfig, LossResult, compute_loss
from .synth import DatasetSpec, Dataset, generate_dataset, measure_input_imbalance
from .trainer import ToyModel, TrainConfig, TrainingLog, TrainingDiverged, train, evaluate, forward
from .guide import GuidanceConfig, SearchTrace, oii_guided_search, grid_search, complexity_report
from .estimators import ToySegmenter, OIIGuidedSearch

__version__ = "0.1.0"
