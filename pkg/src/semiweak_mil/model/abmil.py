"""Attention-based MIL model: aggregator, linear classifier and EMA teacher.

For a bag ``X`` (``N x d``) the model computes

* attention ``a = softmax(w_att . tanh(V_att x_j))`` over instances,
* bag embedding ``z = sum_j a_j x_j``,
* class probabilities ``softmax(W_cls z + b_cls)``.
"""

from __future__ import annotations

from collections.abc import Sequence
from dataclasses import dataclass
from typing import Final

import numpy as np

from semiweak_mil.errors import DimensionError, DomainError
from semiweak_mil.tensor import Node, Tape, ops

PARAM_NAMES: Final[tuple[str, ...]] = ("v_att", "w_att", "w_cls", "b_cls")


@dataclass(frozen=True, eq=False)
class MilParams:
    """Immutable parameter snapshot.

    Shapes: ``v_att`` ``h x d``, ``w_att`` ``1 x h``, ``w_cls`` ``C x d``,
    ``b_cls`` ``1 x C``.
    """

    v_att: np.ndarray
    w_att: np.ndarray
    w_cls: np.ndarray
    b_cls: np.ndarray

    def __post_init__(self) -> None:
        for name in PARAM_NAMES:
            array = ops.as_matrix(getattr(self, name), name=name).copy()
            if not np.all(np.isfinite(array)):
                raise DomainError("Model parameters must be finite.", details=name)
            array.setflags(write=False)
            object.__setattr__(self, name, array)
        h, d = self.v_att.shape
        c = self.w_cls.shape[0]
        expected = {"w_att": (1, h), "w_cls": (c, d), "b_cls": (1, c)}
        for name, shape in expected.items():
            if getattr(self, name).shape != shape:
                raise DimensionError("Inconsistent parameter shapes.", details=f"{name}={getattr(self, name).shape}")

    @property
    def dim(self) -> int:
        return int(self.v_att.shape[1])

    @property
    def hidden(self) -> int:
        return int(self.v_att.shape[0])

    @property
    def num_classes(self) -> int:
        return int(self.w_cls.shape[0])

    def arrays(self) -> tuple[np.ndarray, ...]:
        return tuple(getattr(self, name) for name in PARAM_NAMES)

    @classmethod
    def from_arrays(cls, arrays: Sequence[np.ndarray]) -> "MilParams":
        if len(arrays) != len(PARAM_NAMES):
            raise DimensionError("Expected one array per parameter.", details=f"got {len(arrays)}")
        return cls(**dict(zip(PARAM_NAMES, arrays)))

    def storage_rounded(self) -> "MilParams":
        """The snapshot as it reads back from a float32 checkpoint."""

        return MilParams.from_arrays([array.astype(np.float32).astype(np.float64) for array in self.arrays()])

    def equals(self, other: "MilParams") -> bool:
        return all(np.array_equal(a, b) for a, b in zip(self.arrays(), other.arrays()))


@dataclass(frozen=True, eq=False)
class Prediction:
    probs: np.ndarray
    label: int
    confidence: float
    attention: np.ndarray


@dataclass(frozen=True)
class ParamNodes:
    """Model parameters bound as differentiable leaves on one tape."""

    v_att: Node
    w_att: Node
    w_cls: Node
    b_cls: Node

    def leaves(self) -> tuple[Node, ...]:
        return tuple(getattr(self, name) for name in PARAM_NAMES)


def init_params(d: int, h: int, c: int, seed: int) -> MilParams:
    """Uniform ``(-1/sqrt(fan_in), 1/sqrt(fan_in))`` weights, zero classifier bias."""

    if min(d, h, c) < 1:
        raise DomainError("Model dimensions must be positive.", details=f"d={d}, h={h}, C={c}")
    rng = np.random.default_rng(seed)

    def uniform(rows: int, cols: int, fan_in: int) -> np.ndarray:
        bound = 1.0 / np.sqrt(fan_in)
        return rng.uniform(-bound, bound, size=(rows, cols))

    return MilParams(
        v_att=uniform(h, d, d),
        w_att=uniform(1, h, h),
        w_cls=uniform(c, d, d),
        b_cls=np.zeros((1, c)),
    )


def _check_features(params: MilParams, features: np.ndarray) -> np.ndarray:
    matrix = ops.as_matrix(features, name="features")
    if matrix.shape[1] != params.dim:
        raise DimensionError(
            "Feature dimension does not match the model.",
            details=f"{matrix.shape[1]} != {params.dim}",
        )
    if matrix.shape[0] < 1:
        raise DimensionError("A bag needs at least one instance.")
    return matrix


def _prediction(probs: np.ndarray, attention: np.ndarray) -> Prediction:
    label = int(np.argmax(probs))
    return Prediction(probs=probs, label=label, confidence=float(probs[label]), attention=attention)


def forward(params: MilParams, features: np.ndarray) -> Prediction:
    """Predict a bag without recording a tape."""

    x = _check_features(params, features)
    hidden = ops.tanh(ops.matmul(x, params.v_att, transpose_b=True))
    attention = ops.softmax_rows(ops.matmul(params.w_att, hidden, transpose_b=True))
    embedding = ops.matmul(attention, x)
    logits = ops.add_bias(ops.matmul(embedding, params.w_cls, transpose_b=True), params.b_cls)
    probs = ops.ensure_finite(ops.softmax_rows(logits), "forward")
    return _prediction(probs[0], attention[0])


def bind(tape: Tape, params: MilParams) -> ParamNodes:
    return ParamNodes(*(tape.leaf(getattr(params, name), name=name) for name in PARAM_NAMES))


def forward_on_tape(tape: Tape, nodes: ParamNodes, features: np.ndarray) -> tuple[Node, Node]:
    """Record the forward pass; returns ``(probs, attention)`` nodes, each a single row."""

    if features.shape[1] != nodes.v_att.shape[1]:
        raise DimensionError("Feature dimension does not match the model.")
    x = tape.constant(features, name="features")
    hidden = tape.tanh(tape.matmul(x, nodes.v_att, transpose_b=True))
    attention = tape.softmax_rows(tape.matmul(nodes.w_att, hidden, transpose_b=True))
    embedding = tape.weighted_sum_rows(attention, x)
    logits = tape.add_bias(tape.matmul(embedding, nodes.w_cls, transpose_b=True), nodes.b_cls)
    return tape.softmax_rows(logits), attention


def instance_scores(params: MilParams, features: np.ndarray) -> np.ndarray:
    """Unnormalised attention logits, one per instance."""

    x = _check_features(params, features)
    hidden = ops.tanh(ops.matmul(x, params.v_att, transpose_b=True))
    return ops.matmul(params.w_att, hidden, transpose_b=True)[0]


def ema_update(teacher: MilParams, student: MilParams, decay: float) -> MilParams:
    """``theta_t <- decay * theta_t + (1 - decay) * theta_s`` for every coordinate."""

    if not 0.0 <= decay <= 1.0:
        raise DomainError("EMA decay must lie in [0, 1].", details=f"decay={decay}")
    for mine, theirs in zip(teacher.arrays(), student.arrays()):
        if mine.shape != theirs.shape:
            raise DimensionError("Teacher and student shapes differ.", details=f"{mine.shape} vs {theirs.shape}")
    return MilParams.from_arrays(
        [decay * mine + (1.0 - decay) * theirs for mine, theirs in zip(teacher.arrays(), student.arrays())]
    )


__all__ = [
    "PARAM_NAMES",
    "MilParams",
    "ParamNodes",
    "Prediction",
    "bind",
    "ema_update",
    "forward",
    "forward_on_tape",
    "init_params",
    "instance_scores",
]
