"""Reverse-mode differentiation over an explicit operation tape.

A :class:`Tape` records nodes in creation order, which is already a
topological order, so :meth:`Tape.backward` simply walks it in reverse.
Leaves created with ``requires_grad=False`` (constants, frozen teacher
outputs) never accumulate gradient.
"""

from __future__ import annotations

from collections.abc import Callable, Sequence
from dataclasses import dataclass, field

import numpy as np

from semiweak_mil.errors import ContractError

from . import ops

Backward = Callable[[np.ndarray], Sequence[np.ndarray | None]]


@dataclass(eq=False)
class Node:
    """One recorded value; ``parents`` precede it on the tape."""

    index: int
    value: np.ndarray
    op: str
    parents: tuple["Node", ...] = ()
    backward_fn: Backward | None = None
    requires_grad: bool = True
    name: str | None = None

    @property
    def shape(self) -> tuple[int, int]:
        return self.value.shape  # type: ignore[return-value]


@dataclass
class Tape:
    nodes: list[Node] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.nodes)

    def _record(
        self,
        value: np.ndarray,
        op: str,
        parents: tuple[Node, ...] = (),
        backward_fn: Backward | None = None,
        *,
        requires_grad: bool | None = None,
        name: str | None = None,
    ) -> Node:
        ops.ensure_finite(value, op)
        if requires_grad is None:
            requires_grad = any(parent.requires_grad for parent in parents)
        node = Node(
            index=len(self.nodes),
            value=value,
            op=op,
            parents=parents,
            backward_fn=backward_fn,
            requires_grad=requires_grad,
            name=name,
        )
        self.nodes.append(node)
        return node

    def leaf(self, value: np.ndarray | float, *, name: str | None = None) -> Node:
        """A differentiable input (a parameter)."""

        return self._record(ops.as_matrix(value, name=name or "leaf"), "leaf", requires_grad=True, name=name)

    def constant(self, value: np.ndarray | float, *, name: str | None = None) -> Node:
        return self._record(ops.as_matrix(value, name=name or "constant"), "constant", requires_grad=False, name=name)

    # -- primitives -----------------------------------------------------------------

    def matmul(self, a: Node, b: Node, *, transpose_b: bool = False) -> Node:
        value = ops.matmul(a.value, b.value, transpose_b=transpose_b)

        def backward(grad: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
            if transpose_b:
                return grad @ b.value, grad.T @ a.value
            return grad @ b.value.T, a.value.T @ grad

        return self._record(value, "matmul", (a, b), backward)

    def weighted_sum_rows(self, weights: Node, rows: Node) -> Node:
        """``1 x N`` weights times ``N x d`` rows: the attention-pooled embedding."""

        if weights.shape[0] != 1:
            raise ContractError("weighted_sum_rows expects a single row of weights.", details=f"{weights.shape}")
        return self.matmul(weights, rows)

    def add_bias(self, a: Node, bias: Node) -> Node:
        value = ops.add_bias(a.value, bias.value)
        return self._record(value, "add_bias", (a, bias), lambda grad: (grad, grad.sum(axis=0, keepdims=True)))

    def add(self, a: Node, b: Node) -> Node:
        return self._record(ops.elementwise(a.value, b.value, "add"), "add", (a, b), lambda grad: (grad, grad))

    def sub(self, a: Node, b: Node) -> Node:
        return self._record(ops.elementwise(a.value, b.value, "sub"), "sub", (a, b), lambda grad: (grad, -grad))

    def mul(self, a: Node, b: Node) -> Node:
        value = ops.elementwise(a.value, b.value, "mul")
        return self._record(value, "mul", (a, b), lambda grad: (grad * b.value, grad * a.value))

    def tanh(self, a: Node) -> Node:
        value = ops.tanh(a.value)
        return self._record(value, "tanh", (a,), lambda grad: (grad * (1.0 - value * value),))

    def softmax_rows(self, a: Node) -> Node:
        value = ops.softmax_rows(a.value)

        def backward(grad: np.ndarray) -> tuple[np.ndarray]:
            return (value * (grad - np.sum(grad * value, axis=1, keepdims=True)),)

        return self._record(value, "softmax_rows", (a,), backward)

    def log(self, a: Node) -> Node:
        value = ops.log(a.value)
        return self._record(value, "log", (a,), lambda grad: (grad / a.value,))

    def sum(self, a: Node) -> Node:
        value = np.sum(a.value).reshape(1, 1)
        return self._record(value, "sum", (a,), lambda grad: (np.full_like(a.value, grad[0, 0]),))

    def scale(self, a: Node, factor: float) -> Node:
        return self._record(a.value * factor, "scale", (a,), lambda grad: (grad * factor,))

    def clamp_min(self, a: Node, floor: float) -> Node:
        value = np.maximum(a.value, floor)
        mask = (a.value > floor).astype(np.float64)
        return self._record(value, "clamp_min", (a,), lambda grad: (grad * mask,))

    # -- reverse pass ---------------------------------------------------------------

    def backward(self, loss: Node) -> dict[int, np.ndarray]:
        """Gradients of scalar ``loss`` for every differentiable node, keyed by node index."""

        if loss.shape != (1, 1):
            raise ContractError("backward needs a scalar (1 x 1) loss node.", details=f"shape={loss.shape}")
        if self.nodes[loss.index] is not loss:
            raise ContractError("Loss node was recorded on a different tape.")
        grads: dict[int, np.ndarray] = {loss.index: np.ones((1, 1))}
        for node in reversed(self.nodes[: loss.index + 1]):
            grad = grads.get(node.index)
            if grad is None or node.backward_fn is None:
                continue
            for parent, parent_grad in zip(node.parents, node.backward_fn(grad)):
                if parent_grad is None or not parent.requires_grad:
                    continue
                if parent.index in grads:
                    grads[parent.index] = grads[parent.index] + parent_grad
                else:
                    grads[parent.index] = parent_grad
        return grads

    def gradients(self, loss: Node, leaves: Sequence[Node]) -> list[np.ndarray]:
        """Gradients for ``leaves`` in the given order (zeros for unreached leaves)."""

        grads = self.backward(loss)
        return [grads.get(leaf.index, np.zeros_like(leaf.value)) for leaf in leaves]


__all__ = ["Node", "Tape"]
