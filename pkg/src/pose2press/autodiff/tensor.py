"""Dense tensors with reverse-mode automatic differentiation.

The engine is deliberately small: a ``Tensor`` wraps a row-major numpy
array, operations link output tensors to their parents with a backward
closure, and ``Tensor.backward`` replays those closures in reverse
topological order.  float32 is the working precision for training;
float64 is used when validating gradients against finite differences.
"""

from __future__ import annotations

from typing import Callable, Optional, Sequence

import numpy as np

from ..errors import NumericalError, ShapeError

_FINITE_CHECKS = True
_GRAD_ENABLED = True


class no_grad:
    """Context manager that stops ops from recording the backward graph.

    Inside the block every op output is a plain value node, so inference
    over large batches holds only the tensors still referenced instead of
    the whole chain of intermediates.
    """

    def __enter__(self):
        global _GRAD_ENABLED
        self._previous = _GRAD_ENABLED
        _GRAD_ENABLED = False
        return self

    def __exit__(self, exc_type, exc, tb):
        global _GRAD_ENABLED
        _GRAD_ENABLED = self._previous
        return False


def grad_enabled() -> bool:
    return _GRAD_ENABLED


def set_finite_checks(enabled: bool) -> bool:
    """Toggle NaN/Inf validation of tensor values; returns the previous setting.

    Checks are on by default.  The training loop always validates the loss
    scalar regardless of this switch.
    """
    global _FINITE_CHECKS
    previous = _FINITE_CHECKS
    _FINITE_CHECKS = bool(enabled)
    return previous


def finite_checks_enabled() -> bool:
    return _FINITE_CHECKS


class Tensor:
    """N-dimensional value node of the differentiation graph.

    Attributes:
        data: numpy array (float32 or float64), row-major.
        requires_grad: whether backward passes accumulate into ``grad``.
        grad: same-shape array once a backward pass has reached this node.
    """

    __slots__ = ("data", "requires_grad", "grad", "_parents", "_backward_fn", "_grad_borrowed")

    def __init__(self, data, requires_grad: bool = False, dtype=None):
        arr = np.asarray(data, dtype=dtype)
        if arr.dtype not in (np.float32, np.float64):
            arr = arr.astype(np.float64)
        if _FINITE_CHECKS and not np.all(np.isfinite(arr)):
            raise NumericalError("tensor holds NaN or Inf values")
        self.data = arr
        self.requires_grad = bool(requires_grad)
        self.grad: Optional[np.ndarray] = None
        self._parents: tuple = ()
        self._backward_fn: Optional[Callable[[np.ndarray], None]] = None
        self._grad_borrowed = False

    @property
    def shape(self) -> tuple:
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    @property
    def size(self) -> int:
        return self.data.size

    def item(self) -> float:
        if self.data.size != 1:
            raise ShapeError(f"item() requires a scalar tensor, got shape {self.shape}")
        return float(self.data.reshape(()))

    def zero_grad(self) -> None:
        self.grad = None
        self._grad_borrowed = False

    def accumulate_grad(self, g: np.ndarray, own: bool = False) -> None:
        """Add a contribution to ``grad`` with copy-on-write adoption.

        The first contribution is adopted without copying; ``own=True``
        marks arrays freshly allocated by the calling closure (safe to
        mutate in place later), anything else is treated as borrowed and
        replaced, not mutated, when a second contribution arrives.
        """
        if not self.requires_grad:
            return
        if self.grad is None:
            if g.dtype != self.data.dtype:
                g = g.astype(self.data.dtype)
                own = True
            self.grad = g
            self._grad_borrowed = not own
        elif self._grad_borrowed:
            self.grad = self.grad + g
            self._grad_borrowed = False
        else:
            self.grad += g

    def backward(self) -> None:
        """Run reverse-mode differentiation from this scalar node.

        Gradients accumulate into ``grad`` of every reachable tensor with
        ``requires_grad`` set; repeated uses of a tensor sum naturally.
        """
        if self.data.size != 1:
            raise ShapeError(f"backward() requires a scalar tensor, got shape {self.shape}")
        order = _topological_order(self)
        self.grad = np.ones_like(self.data)
        self._grad_borrowed = False
        for node in reversed(order):
            if node._backward_fn is not None and node.grad is not None:
                node._backward_fn(node.grad)

    def detach(self) -> "Tensor":
        return Tensor(self.data.copy())

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, dtype={self.data.dtype}, requires_grad={self.requires_grad})"


class Parameter(Tensor):
    """A trainable tensor with a dotted name path, unique within a model."""

    __slots__ = ("name",)

    def __init__(self, data, name: str = "", dtype=None):
        super().__init__(data, requires_grad=True, dtype=dtype)
        self.name = name

    def __repr__(self) -> str:
        return f"Parameter(name={self.name!r}, shape={self.shape}, dtype={self.data.dtype})"


def from_op(data: np.ndarray, parents: Sequence[Tensor], backward_fn) -> Tensor:
    """Wrap an op result, linking it into the graph when a parent needs gradients."""
    out = Tensor(data)
    if _GRAD_ENABLED and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = tuple(parents)
        out._backward_fn = backward_fn
    return out


def _topological_order(root: Tensor) -> list:
    order: list[Tensor] = []
    visited: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in visited:
            continue
        visited.add(id(node))
        stack.append((node, True))
        for parent in node._parents:
            if id(parent) not in visited:
                stack.append((parent, False))
    return order
