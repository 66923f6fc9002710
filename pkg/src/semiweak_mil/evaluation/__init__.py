"""Slide-level metrics and pseudo label accuracy."""

from .metrics import (
    MetricsBundle,
    PredictionDump,
    accuracy,
    auc_ovr,
    class_aucs,
    compute_metrics,
    confusion,
    macro_f1,
)
from .pseacc import PseAccResult, pse_acc, true_label

__all__ = [
    "MetricsBundle",
    "PredictionDump",
    "PseAccResult",
    "accuracy",
    "auc_ovr",
    "class_aucs",
    "compute_metrics",
    "confusion",
    "macro_f1",
    "pse_acc",
    "true_label",
]
