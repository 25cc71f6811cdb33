"""Dense float64 tensors with define-by-run reverse-mode differentiation.

Every op evaluates eagerly and, when any input requires a gradient, records a
closure that maps the output gradient to input gradients.  ``backward`` walks
the recorded graph once in reverse topological order.

Calling ``backward`` resets the gradient of every node reachable from the root
before accumulating, so calling it twice on the same root yields the same
gradients rather than doubling them.
"""

from __future__ import annotations

import contextlib
from typing import Callable, Iterator, Sequence

import numpy as np
from scipy.special import expit

__all__ = [
    "ShapeError",
    "Tensor",
    "tensor",
    "parameter",
    "no_grad",
    "matmul",
    "add",
    "sub",
    "mul",
    "neg",
    "scale",
    "relu",
    "sigmoid",
    "temperature_sigmoid",
    "mean",
    "sum",
    "backward",
]


class ShapeError(ValueError):
    """Raised when operand shapes are incompatible for an op."""


_GRAD_ENABLED = True


@contextlib.contextmanager
def no_grad() -> Iterator[None]:
    """Evaluate ops without recording the graph (used for frozen sub-networks)."""
    global _GRAD_ENABLED
    prev = _GRAD_ENABLED
    _GRAD_ENABLED = False
    try:
        yield
    finally:
        _GRAD_ENABLED = prev


class Tensor:
    """A node in the computation graph.

    ``data`` is never mutated by ops; only optimizers and ``clip_parameters``
    update parameter leaves in place, between graph constructions.
    """

    __slots__ = ("data", "grad", "requires_grad", "op", "_parents", "_backward")

    def __init__(
        self,
        data,
        requires_grad: bool = False,
        op: str = "leaf",
        parents: tuple["Tensor", ...] = (),
        backward_fn: Callable[[np.ndarray], Sequence[np.ndarray | None]] | None = None,
    ):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad: np.ndarray | None = None
        self.requires_grad = requires_grad
        self.op = op
        self._parents = parents
        self._backward = backward_fn

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    def item(self) -> float:
        return float(self.data.reshape(()))

    def numpy(self) -> np.ndarray:
        return self.data

    def __repr__(self) -> str:
        return f"Tensor(op={self.op}, shape={self.shape})"

    # Operator sugar so losses read like the math.
    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(other, self)

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(other, self)

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)


def tensor(data) -> Tensor:
    """Wrap constant data (no gradient)."""
    if isinstance(data, Tensor):
        return data
    return Tensor(data)


def parameter(data) -> Tensor:
    return Tensor(np.array(data, dtype=np.float64), requires_grad=True)


def _make(op, data, parents, backward_fn) -> Tensor:
    needs = _GRAD_ENABLED and any(p.requires_grad for p in parents)
    if not needs:
        return Tensor(data, op=op)
    return Tensor(data, requires_grad=True, op=op, parents=parents, backward_fn=backward_fn)


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, d in enumerate(shape) if d == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad.reshape(shape)


def _broadcast_shape(op: str, a: Tensor, b: Tensor) -> None:
    try:
        np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise ShapeError(f"{op}: incompatible shapes {a.shape} and {b.shape}") from None


def matmul(a, b) -> Tensor:
    a, b = tensor(a), tensor(b)
    if a.data.ndim != 2 or b.data.ndim not in (1, 2) or a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul: incompatible shapes {a.shape} and {b.shape}")
    A, B = a.data, b.data

    def back(g):
        if B.ndim == 1:
            return np.outer(g, B), A.T @ g
        return g @ B.T, A.T @ g

    return _make("matmul", A @ B, (a, b), back)


def add(a, b) -> Tensor:
    a, b = tensor(a), tensor(b)
    _broadcast_shape("add", a, b)
    sa, sb = a.shape, b.shape
    return _make(
        "add", a.data + b.data, (a, b), lambda g: (_unbroadcast(g, sa), _unbroadcast(g, sb))
    )


def sub(a, b) -> Tensor:
    a, b = tensor(a), tensor(b)
    _broadcast_shape("sub", a, b)
    sa, sb = a.shape, b.shape
    return _make(
        "sub", a.data - b.data, (a, b), lambda g: (_unbroadcast(g, sa), -_unbroadcast(g, sb))
    )


def mul(a, b) -> Tensor:
    """Elementwise product with broadcasting."""
    a, b = tensor(a), tensor(b)
    _broadcast_shape("mul", a, b)
    A, B = a.data, b.data
    return _make(
        "mul",
        A * B,
        (a, b),
        lambda g: (_unbroadcast(g * B, A.shape), _unbroadcast(g * A, B.shape)),
    )


def neg(a) -> Tensor:
    a = tensor(a)
    return _make("neg", -a.data, (a,), lambda g: (-g,))


def scale(a, c: float) -> Tensor:
    """Multiply by a Python scalar constant."""
    a = tensor(a)
    c = float(c)
    return _make("scale", a.data * c, (a,), lambda g: (g * c,))


def relu(a) -> Tensor:
    a = tensor(a)
    on = a.data > 0
    # maximum keeps NaN visible so non-finite training is reported, not masked
    return _make("relu", np.maximum(a.data, 0.0), (a,), lambda g: (g * on,))


def temperature_sigmoid(a, lam: float) -> Tensor:
    """``1 / (1 + exp(-a / lam))``; low ``lam`` pushes outputs towards 0 or 1."""
    if not lam > 0:
        raise ValueError(f"temperature must be positive, got {lam}")
    a = tensor(a)
    s = expit(a.data / lam)
    return _make("temperature_sigmoid", s, (a,), lambda g: (g * s * (1.0 - s) / lam,))


def sigmoid(a) -> Tensor:
    return temperature_sigmoid(a, 1.0)


def mean(a, axis: int | None = None) -> Tensor:
    """Mean over ``axis`` (0 is the batch axis) or over everything."""
    a = tensor(a)
    shape = a.shape
    if axis is None:
        count = a.data.size

        def back(g):
            return (np.full(shape, g / count),)

        return _make("mean", np.asarray(a.data.mean()), (a,), back)
    count = shape[axis]

    def back_axis(g):
        return (np.broadcast_to(np.expand_dims(g, axis), shape) / count,)

    return _make("mean", a.data.mean(axis=axis), (a,), back_axis)


def sum(a, axis: int | None = None) -> Tensor:  # noqa: A001 - mirrors numpy naming
    a = tensor(a)
    shape = a.shape
    if axis is None:
        return _make(
            "sum", np.asarray(a.data.sum()), (a,), lambda g: (np.full(shape, float(g)),)
        )
    return _make(
        "sum",
        a.data.sum(axis=axis),
        (a,),
        lambda g: (np.broadcast_to(np.expand_dims(g, axis), shape).copy(),),
    )


def _topological(root: Tensor) -> list[Tensor]:
    order: list[Tensor] = []
    seen: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            if p.requires_grad and id(p) not in seen:
                stack.append((p, False))
    return order


def backward(root: Tensor) -> None:
    """Populate ``.grad`` with d(root)/d(node) for every node in root's graph."""
    if root.data.size != 1:
        raise ShapeError(f"backward: root must be scalar, got shape {root.shape}")
    order = _topological(root)
    for node in order:
        node.grad = np.zeros_like(node.data)
    root.grad = np.ones_like(root.data)
    for node in reversed(order):
        if node._backward is None:
            continue
        grads = node._backward(node.grad)
        for parent, g in zip(node._parents, grads):
            if parent.requires_grad and g is not None:
                parent.grad = parent.grad + g
