"""Slide-level classification metrics over a prediction dump."""

from __future__ import annotations

import logging
from collections.abc import Sequence
from dataclasses import dataclass
from typing import Any

import numpy as np
from sklearn.metrics import accuracy_score, confusion_matrix, f1_score, precision_recall_fscore_support, roc_auc_score

from semiweak_mil.errors import ContractError, DataError, DimensionError, DomainError

logger = logging.getLogger(__name__)

_NORMALISATION_TOLERANCE = 1e-6


@dataclass(frozen=True, eq=False)
class PredictionDump:
    """Per-sample true labels, predicted labels and probability rows."""

    true: np.ndarray
    pred: np.ndarray
    probs: np.ndarray
    ids: tuple[str, ...] = ()

    def __post_init__(self) -> None:
        true = np.asarray(self.true, dtype=np.int64).reshape(-1)
        pred = np.asarray(self.pred, dtype=np.int64).reshape(-1)
        probs = np.asarray(self.probs, dtype=np.float64)
        if probs.ndim != 2 or probs.shape[0] != true.shape[0] or pred.shape != true.shape:
            raise DimensionError(
                "Prediction dump arrays disagree in length.",
                details=f"true={true.shape}, pred={pred.shape}, probs={probs.shape}",
            )
        num_classes = probs.shape[1]
        if true.size and (true.min() < 0 or true.max() >= num_classes or pred.min() < 0 or pred.max() >= num_classes):
            raise DomainError("Labels must lie in 0..C-1.", details=f"C={num_classes}")
        if true.size and np.any(np.abs(probs.sum(axis=1) - 1.0) > _NORMALISATION_TOLERANCE):
            raise DataError("Probability rows must sum to one.")
        if self.ids and len(self.ids) != true.shape[0]:
            raise DimensionError("One id per sample is required.", details=f"{len(self.ids)} != {true.shape[0]}")
        object.__setattr__(self, "true", true)
        object.__setattr__(self, "pred", pred)
        object.__setattr__(self, "probs", probs)
        object.__setattr__(self, "ids", tuple(self.ids))

    @property
    def num_classes(self) -> int:
        return int(self.probs.shape[1])

    def __len__(self) -> int:
        return int(self.true.shape[0])

    @classmethod
    def from_probs(
        cls,
        true: Sequence[int] | np.ndarray,
        probs: Sequence[Sequence[float]] | np.ndarray,
        ids: Sequence[str] = (),
    ) -> "PredictionDump":
        probs = np.asarray(probs, dtype=np.float64)
        return cls(true=np.asarray(true), pred=np.argmax(probs, axis=1), probs=probs, ids=tuple(ids))


def _require_samples(dump: PredictionDump) -> None:
    if len(dump) == 0:
        raise ContractError("Metrics need at least one sample.")


def accuracy(dump: PredictionDump) -> float:
    _require_samples(dump)
    return float(accuracy_score(dump.true, dump.pred))


def class_aucs(dump: PredictionDump) -> dict[int, float]:
    """One-versus-others AUC per class; degenerate classes are left out."""

    _require_samples(dump)
    aucs: dict[int, float] = {}
    for cls in range(dump.num_classes):
        positives = dump.true == cls
        if positives.all() or not positives.any():
            logger.warning("Skipping degenerate class in AUC", extra={"class_index": cls, "samples": len(dump)})
            continue
        aucs[cls] = float(roc_auc_score(positives.astype(np.int64), dump.probs[:, cls]))
    return aucs


def auc_ovr(dump: PredictionDump) -> float:
    """Macro one-versus-others AUC; for two classes the positive-class AUC."""

    aucs = class_aucs(dump)
    if not aucs:
        raise DataError("AUC is undefined: every class is degenerate.", details=f"samples={len(dump)}")
    if dump.num_classes == 2:
        return aucs.get(1, aucs.get(0, 0.0))
    return float(np.mean(list(aucs.values())))


def macro_f1(dump: PredictionDump) -> float:
    _require_samples(dump)
    labels = list(range(dump.num_classes))
    return float(f1_score(dump.true, dump.pred, labels=labels, average="macro", zero_division=0))


def confusion(dump: PredictionDump) -> np.ndarray:
    """``C x C`` counts, rows are true classes and columns predictions."""

    _require_samples(dump)
    return confusion_matrix(dump.true, dump.pred, labels=list(range(dump.num_classes)))


@dataclass(frozen=True)
class MetricsBundle:
    acc: float
    auc: float | None
    f1: float
    per_class: dict[str, dict[str, float | None]]
    confusion: tuple[tuple[int, ...], ...]

    def to_dict(self) -> dict[str, Any]:
        return {
            "acc": self.acc,
            "auc": self.auc,
            "f1": self.f1,
            "per_class": self.per_class,
            "confusion": [list(row) for row in self.confusion],
        }


def compute_metrics(dump: PredictionDump, class_names: Sequence[str] | None = None) -> MetricsBundle:
    """Bundle ACC, AUC, macro F1, per-class scores and the confusion matrix.

    ``auc`` is ``None`` when every class is degenerate for this dump (for
    instance a validation split holding a single class).
    """

    _require_samples(dump)
    names = list(class_names) if class_names is not None else [str(index) for index in range(dump.num_classes)]
    if len(names) != dump.num_classes:
        raise DimensionError("One name per class is required.", details=f"{len(names)} != {dump.num_classes}")
    aucs = class_aucs(dump)
    labels = list(range(dump.num_classes))
    precision, recall, f1, support = precision_recall_fscore_support(
        dump.true, dump.pred, labels=labels, zero_division=0
    )
    per_class = {
        names[index]: {
            "auc": aucs.get(index),
            "f1": float(f1[index]),
            "precision": float(precision[index]),
            "recall": float(recall[index]),
            "support": float(support[index]),
        }
        for index in labels
    }
    matrix = confusion(dump)
    return MetricsBundle(
        acc=accuracy(dump),
        auc=auc_ovr(dump) if aucs else None,
        f1=macro_f1(dump),
        per_class=per_class,
        confusion=tuple(tuple(int(value) for value in row) for row in matrix),
    )


__all__ = [
    "MetricsBundle",
    "PredictionDump",
    "accuracy",
    "auc_ovr",
    "class_aucs",
    "compute_metrics",
    "confusion",
    "macro_f1",
]
