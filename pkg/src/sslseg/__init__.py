"""Semi-supervised semantic segmentation on procedurally generated scenes.

The pieces compose bottom-up: tensor ops and netpbm IO, synthetic data,
mixing masks, the convolutional net, pseudo-label machinery, losses,
metrics, the training loops, and the estimator/CLI front-ends. Each layer
is importable and testable on its own.
"""

from .cowmask import MixMask, generate_cowmask, generate_cutmix_mask, mix, sample_mask_params
from .data import IGNORE, Dataset, generate_dataset, generate_scene, load_dataset, save_dataset
from .estimators import SelfTrainingSegmenter, SupervisedSegmenter
from .losses import SceConfig, cross_entropy, pseudolabel_weights, weighted_sce
from .metrics import evaluate, miou, new_confusion
from .net import (
    NumericsError,
    SegModel,
    forward,
    init_model,
    load_checkpoint,
    poly_lr,
    save_checkpoint,
)
from .pseudolabel import (
    PseudoLabelRecord,
    boundary_distance_split,
    class_histograms,
    classwise_thresholds,
    decile_split,
    filter_records,
    generate_record,
)
from .train import TrainConfig, decile_experiment, iterate, ssl_round, train_supervised

__version__ = "0.1.0"

__all__ = [
    "IGNORE",
    "Dataset",
    "MixMask",
    "NumericsError",
    "PseudoLabelRecord",
    "SceConfig",
    "SegModel",
    "SelfTrainingSegmenter",
    "SupervisedSegmenter",
    "TrainConfig",
    "boundary_distance_split",
    "class_histograms",
    "classwise_thresholds",
    "cross_entropy",
    "decile_experiment",
    "decile_split",
    "evaluate",
    "filter_records",
    "forward",
    "generate_cowmask",
    "generate_cutmix_mask",
    "generate_dataset",
    "generate_record",
    "generate_scene",
    "init_model",
    "iterate",
    "load_checkpoint",
    "load_dataset",
    "miou",
    "mix",
    "new_confusion",
    "poly_lr",
    "pseudolabel_weights",
    "sample_mask_params",
    "save_checkpoint",
    "save_dataset",
    "ssl_round",
    "train_supervised",
    "weighted_sce",
]
