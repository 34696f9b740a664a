"""Dense float32 tensors with tape-based reverse-mode differentiation.

The engine is deliberately small: tensors wrap contiguous ``numpy`` arrays in
row-major order, every differentiable operation records a backward closure on
the result node, and :func:`backward` walks the recorded graph once.  Data and
gradients are 32-bit; reductions accumulate in 64-bit before casting back.

Graphs are single-writer: build and differentiate a graph on one thread.
Tensors that are not awaiting gradients are immutable in practice and safe to
share read-only.
"""

from __future__ import annotations

from contextlib import contextmanager
from typing import Callable, Iterable, Optional

import numpy as np


class NumericError(ValueError):
    """Raised for invalid numeric inputs (NaNs, bad shapes, bad parameters)."""


class DoubleBackwardError(RuntimeError):
    """Raised when backward() runs twice on one loss without a gradient reset."""


_grad_enabled = True


@contextmanager
def no_grad():
    """Disable graph recording inside the block (evaluation fast path)."""
    global _grad_enabled
    prev = _grad_enabled
    _grad_enabled = False
    try:
        yield
    finally:
        _grad_enabled = prev


def grad_enabled() -> bool:
    return _grad_enabled


class Tensor:
    """A dense float32 array plus an optional gradient buffer."""

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward_fn", "_done")

    def __init__(self, data, requires_grad: bool = False):
        self.data: np.ndarray = np.asarray(data, dtype=np.float32)
        self.grad: Optional[np.ndarray] = None
        self.requires_grad = bool(requires_grad)
        self._parents: tuple = ()
        self._backward_fn: Optional[Callable[[np.ndarray], None]] = None
        self._done = False

    # -- basic introspection ------------------------------------------------

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def size(self) -> int:
        return self.data.size

    @property
    def ndim(self) -> int:
        return self.data.ndim

    def item(self) -> float:
        if self.data.size != 1:
            raise NumericError(f"item() needs a scalar tensor, shape={self.shape}")
        return float(self.data.reshape(()))

    def __repr__(self) -> str:  # pragma: no cover - debugging aid
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad})"

    # -- gradient bookkeeping -----------------------------------------------

    def accumulate_grad(self, g: np.ndarray) -> None:
        if g.shape != self.data.shape:
            raise NumericError(
                f"gradient shape {g.shape} does not match tensor shape {self.data.shape}"
            )
        if self.grad is None:
            self.grad = g.astype(np.float32, copy=True)
        else:
            self.grad += g

    def zero_grad(self) -> None:
        self.grad = None

    # -- operator sugar (thin wrappers over ops, bound late) -----------------

    def __add__(self, other):
        from . import ops

        return ops.add(self, other)

    def __mul__(self, other):
        from . import ops

        return ops.mul(self, other)

    def __sub__(self, other):
        from . import ops

        return ops.sub(self, other)

    def __matmul__(self, other):
        from . import ops

        return ops.matmul(self, other)


class Parameter(Tensor):
    """A named, trainable tensor.

    ``frozen`` parameters take part in forward computation but never receive
    gradient (their contribution is discarded at graph-record time) and are
    never touched by the optimizer.
    """

    __slots__ = ("name", "trainable", "frozen")

    def __init__(self, data, name: str, trainable: bool = True, frozen: bool = False):
        super().__init__(data, requires_grad=not frozen)
        self.name = name
        self.trainable = trainable
        self.frozen = frozen

    @property
    def tensor(self) -> Tensor:
        return self

    def set_frozen(self, flag: bool) -> None:
        self.frozen = bool(flag)
        self.requires_grad = not self.frozen
        if self.frozen:
            self.grad = None

    def __repr__(self) -> str:  # pragma: no cover - debugging aid
        flags = "frozen" if self.frozen else "trainable"
        return f"Parameter({self.name!r}, shape={self.shape}, {flags})"


def record(out: Tensor, parents: tuple, backward_fn) -> Tensor:
    """Attach a backward rule to ``out`` if grad mode is on and any parent needs it."""
    if not _grad_enabled:
        return out
    for p in parents:
        if p.requires_grad:
            out.requires_grad = True
            out._parents = parents
            out._backward_fn = backward_fn
            break
    return out


def backward(loss: Tensor) -> None:
    """Accumulate d(loss)/d(leaf) into every reachable tensor that wants grad.

    ``loss`` must be scalar.  Calling backward a second time on the same loss
    without resetting gradients raises :class:`DoubleBackwardError` (the
    accumulation would silently double otherwise).
    """
    if loss.size != 1:
        raise NumericError(f"backward() needs a scalar loss, got shape {loss.shape}")
    if loss._done:
        raise DoubleBackwardError(
            "backward() already ran for this loss; reset gradients and rebuild the graph"
        )
    loss._done = True
    if not loss.requires_grad:
        return

    topo: list[Tensor] = []
    visited: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(loss, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            topo.append(node)
            continue
        if id(node) in visited:
            continue
        visited.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            if p.requires_grad and id(p) not in visited:
                stack.append((p, False))

    loss.grad = np.ones_like(loss.data)
    for node in reversed(topo):
        if node._backward_fn is not None:
            if node.grad is not None:
                node._backward_fn(node.grad)
            if not isinstance(node, Parameter):
                node.grad = None  # interior buffers are no longer needed
