from __future__ import annotations

from collections.abc import Sequence

import numpy as np

from semiweak_mil.errors import DimensionError, DomainError, NumericError
from semiweak_mil.model.abmil import MilParams


class Adam:
    """Adam over the four model arrays; ``lr`` may be changed between steps."""

    def __init__(
        self,
        params: MilParams,
        *,
        lr: float,
        betas: tuple[float, float] = (0.9, 0.999),
        eps: float = 1e-8,
    ) -> None:
        if lr <= 0:
            raise DomainError("Learning rate must be positive.", details=f"lr={lr}")
        self.lr = lr
        self.beta1, self.beta2 = betas
        self.eps = eps
        self.steps = 0
        self._m = [np.zeros_like(array) for array in params.arrays()]
        self._v = [np.zeros_like(array) for array in params.arrays()]

    def step(self, params: MilParams, grads: Sequence[np.ndarray]) -> MilParams:
        arrays = params.arrays()
        if len(grads) != len(arrays):
            raise DimensionError("One gradient per parameter array is required.", details=f"got {len(grads)}")
        self.steps += 1
        correction1 = 1.0 - self.beta1**self.steps
        correction2 = 1.0 - self.beta2**self.steps
        updated: list[np.ndarray] = []
        for index, (array, grad) in enumerate(zip(arrays, grads)):
            if grad.shape != array.shape:
                raise DimensionError("Gradient shape mismatch.", details=f"{grad.shape} vs {array.shape}")
            if not np.all(np.isfinite(grad)):
                raise NumericError("Non-finite gradient.", details=f"step={self.steps}")
            self._m[index] = self.beta1 * self._m[index] + (1.0 - self.beta1) * grad
            self._v[index] = self.beta2 * self._v[index] + (1.0 - self.beta2) * grad * grad
            m_hat = self._m[index] / correction1
            v_hat = self._v[index] / correction2
            updated.append(array - self.lr * m_hat / (np.sqrt(v_hat) + self.eps))
        return MilParams.from_arrays(updated)


__all__ = ["Adam"]
