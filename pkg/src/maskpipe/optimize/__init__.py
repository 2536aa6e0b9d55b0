"""Threshold tuning, TTA, snapshot ensembling and the cyclic LR schedule."""

from .ensemble import SnapshotSelection, average_topk, ensemble_label, rank_snapshots, select_tta, tune_topk
from .schedule import LrSchedule, cyclic_lr, schedule_table
from .synthetic import SyntheticPredictor, image_digest, synthetic_predictor
from .threshold import ThresholdGrid, ThresholdResult, iou_curve, pooled_counts, threshold_search
from .tta import (
    ALL_METHODS,
    Predictor,
    TtaMethod,
    all_transforms,
    method_transforms,
    predict_copies,
    tta_aggregate,
    tta_expand,
    tta_predict,
)

__all__ = [
    "ALL_METHODS",
    "LrSchedule",
    "Predictor",
    "SnapshotSelection",
    "SyntheticPredictor",
    "ThresholdGrid",
    "ThresholdResult",
    "TtaMethod",
    "all_transforms",
    "average_topk",
    "cyclic_lr",
    "ensemble_label",
    "image_digest",
    "iou_curve",
    "method_transforms",
    "pooled_counts",
    "predict_copies",
    "rank_snapshots",
    "schedule_table",
    "select_tta",
    "synthetic_predictor",
    "threshold_search",
    "tta_aggregate",
    "tta_expand",
    "tta_predict",
    "tune_topk",
]
