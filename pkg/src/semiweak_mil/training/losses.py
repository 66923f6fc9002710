"""Consistency, cross-entropy and the equal-weight total loss.

Each loss exists twice: as a plain numpy function for reporting and tests,
and as a builder that records the same computation on a :class:`Tape`.
"""

from __future__ import annotations

import logging
from collections.abc import Sequence
from typing import Final

import numpy as np

from semiweak_mil.errors import ContractError, DimensionError, DomainError
from semiweak_mil.tensor import Node, Tape

logger = logging.getLogger(__name__)

PROB_FLOOR: Final[float] = 1e-12
CONSISTENCY_WEIGHT: Final[float] = 0.5
SUPERVISED_WEIGHT: Final[float] = 0.5


def _rows(probs: np.ndarray | Sequence[float]) -> np.ndarray:
    array = np.asarray(probs, dtype=np.float64)
    return array.reshape(1, -1) if array.ndim == 1 else array


def consistency_loss(teacher_probs: np.ndarray, student_probs: np.ndarray) -> float:
    """Squared Euclidean distance between probability vectors, averaged over rows."""

    teacher = _rows(teacher_probs)
    student = _rows(student_probs)
    if teacher.shape != student.shape:
        raise DimensionError(
            "Teacher and student probabilities differ in shape.",
            details=f"{teacher.shape} vs {student.shape}",
        )
    return float(np.mean(np.sum((teacher - student) ** 2, axis=1)))


def supervised_loss(student_probs: np.ndarray, labels: int | Sequence[int] | np.ndarray) -> float:
    """Cross-entropy ``-log p[label]``, averaged over rows; probabilities are floored at ``1e-12``."""

    probs = _rows(student_probs)
    targets = np.atleast_1d(np.asarray(labels, dtype=np.int64))
    if targets.shape[0] != probs.shape[0]:
        raise DimensionError(
            "One label per probability row is required.",
            details=f"{targets.shape[0]} != {probs.shape[0]}",
        )
    if targets.min() < 0 or targets.max() >= probs.shape[1]:
        raise DomainError("Label outside 0..C-1.", details=f"C={probs.shape[1]}")
    picked = probs[np.arange(probs.shape[0]), targets]
    if np.any(picked < PROB_FLOOR):
        logger.warning(
            "Clamped a vanishing label probability",
            extra={"floor": PROB_FLOOR, "min_prob": float(picked.min())},
        )
    return float(np.mean(-np.log(np.maximum(picked, PROB_FLOOR))))


def total_loss(l_con: float, l_sup: float) -> float:
    return CONSISTENCY_WEIGHT * l_con + SUPERVISED_WEIGHT * l_sup


def consistency_on_tape(tape: Tape, teacher_probs: np.ndarray, student_probs: Node) -> Node:
    """Teacher probabilities enter as a constant, so no gradient reaches the teacher."""

    target = tape.constant(_rows(teacher_probs), name="teacher_probs")
    if target.shape != student_probs.shape:
        raise DimensionError("Teacher and student probabilities differ in shape.")
    diff = tape.sub(student_probs, target)
    return tape.scale(tape.sum(tape.mul(diff, diff)), 1.0 / student_probs.shape[0])


def supervised_on_tape(tape: Tape, student_probs: Node, label: int) -> Node:
    rows, num_classes = student_probs.shape
    if rows != 1:
        raise ContractError("Supervised loss on the tape takes one probability row.", details=f"rows={rows}")
    if not 0 <= label < num_classes:
        raise DomainError("Label outside 0..C-1.", details=f"label={label}, C={num_classes}")
    one_hot = np.zeros((1, num_classes))
    one_hot[0, label] = 1.0
    picked = tape.sum(tape.mul(student_probs, tape.constant(one_hot, name="one_hot")))
    if picked.value[0, 0] < PROB_FLOOR:
        logger.warning("Clamped a vanishing label probability", extra={"floor": PROB_FLOOR, "label": label})
    return tape.scale(tape.log(tape.clamp_min(picked, PROB_FLOOR)), -1.0)


def total_on_tape(tape: Tape, l_con: Node | None, l_sup: Node | None) -> Node:
    """``0.5 * l_con + 0.5 * l_sup``; a missing term counts as zero."""

    terms = [
        tape.scale(node, weight)
        for node, weight in ((l_con, CONSISTENCY_WEIGHT), (l_sup, SUPERVISED_WEIGHT))
        if node is not None
    ]
    if not terms:
        raise ContractError("The total loss needs at least one term.")
    total = terms[0]
    for term in terms[1:]:
        total = tape.add(total, term)
    return total


__all__ = [
    "CONSISTENCY_WEIGHT",
    "PROB_FLOOR",
    "SUPERVISED_WEIGHT",
    "consistency_loss",
    "consistency_on_tape",
    "supervised_loss",
    "supervised_on_tape",
    "total_loss",
    "total_on_tape",
]
