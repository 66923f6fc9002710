"""Forward kernels on 2-D float64 matrices.

These are the single source of truth for forward values: the tape records
results computed here, and tape-free inference calls them directly, so both
paths agree bitwise.
"""

from __future__ import annotations

import numpy as np

from semiweak_mil.errors import DimensionError, NumericError


def as_matrix(value: np.ndarray | float | list, *, name: str = "value") -> np.ndarray:
    """Coerce ``value`` to a 2-D float64 array (scalars become ``1 x 1``)."""

    array = np.asarray(value, dtype=np.float64)
    if array.ndim == 0:
        array = array.reshape(1, 1)
    elif array.ndim == 1:
        array = array.reshape(1, -1)
    if array.ndim != 2:
        raise DimensionError(f"{name} must be a matrix.", details=f"ndim={array.ndim}")
    return array


def ensure_finite(value: np.ndarray, op: str) -> np.ndarray:
    if not np.all(np.isfinite(value)):
        raise NumericError("Non-finite value produced.", details=f"op={op}")
    return value


def matmul(a: np.ndarray, b: np.ndarray, *, transpose_b: bool = False) -> np.ndarray:
    inner_b = b.shape[1] if transpose_b else b.shape[0]
    if a.shape[1] != inner_b:
        raise DimensionError("matmul shape mismatch.", details=f"{a.shape} x {b.shape}, transpose_b={transpose_b}")
    return a @ (b.T if transpose_b else b)


def add_bias(a: np.ndarray, bias: np.ndarray) -> np.ndarray:
    if bias.shape != (1, a.shape[1]):
        raise DimensionError("Bias must be a 1 x m row matching the input width.", details=f"{a.shape} + {bias.shape}")
    return a + bias


def elementwise(a: np.ndarray, b: np.ndarray, op: str) -> np.ndarray:
    if a.shape != b.shape:
        raise DimensionError(f"{op} needs equal shapes.", details=f"{a.shape} vs {b.shape}")
    if op == "add":
        return a + b
    if op == "sub":
        return a - b
    return a * b


def softmax_rows(a: np.ndarray) -> np.ndarray:
    shifted = a - np.max(a, axis=1, keepdims=True)
    exps = np.exp(shifted)
    return exps / np.sum(exps, axis=1, keepdims=True)


def tanh(a: np.ndarray) -> np.ndarray:
    return np.tanh(a)


def log(a: np.ndarray) -> np.ndarray:
    if np.any(a <= 0):
        raise NumericError("log of a non-positive value.", details=f"min={float(np.min(a))}")
    return np.log(a)


__all__ = ["add_bias", "as_matrix", "elementwise", "ensure_finite", "log", "matmul", "softmax_rows", "tanh"]
