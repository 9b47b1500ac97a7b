"""Reverse-mode automatic differentiation over dense float64 arrays.

A :class:`Tensor` wraps a numpy float64 buffer.  Operations on tracked
tensors append an entry to an ambient tape; :func:`backward` replays the
tape in reverse execution order (a reverse topological order, since the
graph is built incrementally) and accumulates gradients into every
tracked tensor's ``grad`` buffer.

Design rules enforced at every operation boundary:

* values are float64 and finite (NaN/Inf raises :class:`NonFiniteError`),
* elementwise broadcasting is limited to leading-1 extents, i.e. the
  smaller operand may only broadcast along a prefix of the axes,
* the tape is single threaded and cleared by :func:`backward`.
"""

from __future__ import annotations

import contextlib
from typing import Callable, Sequence

import numpy as np

from .errors import ContractError, DimensionError, NonFiniteError

__all__ = [
    "Tensor",
    "backward",
    "no_grad",
    "grad_enabled",
    "tape_size",
    "clear_tape",
    "add",
    "sub",
    "mul",
    "scale",
    "neg",
    "matmul",
    "matvec",
    "relu",
    "tanh",
    "absolute",
    "softmax_rows",
    "reshape",
    "transpose_last2",
    "sum_all",
    "mean_all",
    "constant",
    "zeros",
    "eye",
]

# Ambient tape: list of (output tensor, backward closure) in execution order.
_TAPE: list[tuple["Tensor", Callable[[np.ndarray], None]]] = []
_GRAD_ENABLED: bool = True


def _check_finite(data: np.ndarray, where: str) -> None:
    if not np.isfinite(data).all():
        raise NonFiniteError(f"non-finite value produced by {where}")


class Tensor:
    """Dense float64 array with an optional gradient buffer."""

    __slots__ = ("data", "grad", "requires_grad")

    def __init__(self, data, requires_grad: bool = False):
        arr = np.asarray(data, dtype=np.float64)
        _check_finite(arr, "tensor construction")
        self.data = arr
        self.grad: np.ndarray | None = None
        self.requires_grad = bool(requires_grad)

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    def item(self) -> float:
        return float(self.data)

    def zero_grad(self) -> None:
        self.grad = None

    def __repr__(self) -> str:  # pragma: no cover - debugging aid
        flag = ", tracked" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}{flag})"

    # Operator sugar; semantics live in the module-level functions.
    def __add__(self, other: "Tensor") -> "Tensor":
        return add(self, other)

    def __sub__(self, other: "Tensor") -> "Tensor":
        return sub(self, other)

    def __mul__(self, other):
        if isinstance(other, Tensor):
            return mul(self, other)
        return scale(self, float(other))

    def __rmul__(self, other):
        return scale(self, float(other))

    def __truediv__(self, other):
        if isinstance(other, Tensor):
            raise ContractError("tensor/tensor division is not supported")
        return scale(self, 1.0 / float(other))

    def __neg__(self) -> "Tensor":
        return neg(self)

    def __matmul__(self, other: "Tensor") -> "Tensor":
        return matmul(self, other)


@contextlib.contextmanager
def no_grad():
    """Context manager that suspends tape recording."""
    global _GRAD_ENABLED
    prev = _GRAD_ENABLED
    _GRAD_ENABLED = False
    try:
        yield
    finally:
        _GRAD_ENABLED = prev


def grad_enabled() -> bool:
    return _GRAD_ENABLED


def tape_size() -> int:
    return len(_TAPE)


def clear_tape() -> None:
    _TAPE.clear()


def _as_tensor(x) -> Tensor:
    if not isinstance(x, Tensor):
        raise ContractError(f"expected Tensor, got {type(x).__name__}")
    return x


def _make(data: np.ndarray, inputs: Sequence[Tensor], backward_fn, name: str) -> Tensor:
    """Create an op output, recording a tape entry when tracking applies."""
    _check_finite(data, name)
    tracked = _GRAD_ENABLED and any(t.requires_grad for t in inputs)
    out = Tensor.__new__(Tensor)
    out.data = data
    out.grad = None
    out.requires_grad = tracked
    if tracked:
        _TAPE.append((out, backward_fn))
    return out


def _accumulate(t: Tensor, g: np.ndarray) -> None:
    if not t.requires_grad:
        return
    if t.grad is None:
        t.grad = np.array(g, dtype=np.float64, copy=True)
    else:
        t.grad += g


def backward(loss: Tensor) -> None:
    """Populate ``grad`` on every tracked ancestor of ``loss``.

    ``loss`` must be a single-element tensor produced by taped
    operations.  The tape is cleared afterwards, so each graph supports
    exactly one backward pass.
    """
    _as_tensor(loss)
    if loss.data.size != 1:
        raise ContractError(f"backward requires a scalar loss, got shape {loss.shape}")
    if not loss.requires_grad:
        raise ContractError("loss does not depend on any tracked tensor")
    if not _TAPE:
        raise ContractError("no recorded operations; the tape supports one backward per forward")
    try:
        loss.grad = np.ones_like(loss.data)
        for out, fn in reversed(_TAPE):
            if out.grad is not None:
                fn(out.grad)
    finally:
        _TAPE.clear()


# ---------------------------------------------------------------------------
# Broadcasting helpers (leading-1 extents only)
# ---------------------------------------------------------------------------


def _check_broadcast(sa: tuple[int, ...], sb: tuple[int, ...], name: str) -> None:
    ndim = max(len(sa), len(sb))
    pa = (1,) * (ndim - len(sa)) + sa
    pb = (1,) * (ndim - len(sb)) + sb
    diff = [i for i in range(ndim) if pa[i] != pb[i]]
    for i in diff:
        if min(pa[i], pb[i]) != 1:
            raise DimensionError(f"{name}: incompatible shapes {sa} and {sb}")
    # broadcast axes must lead; axes where both operands are 1 don't count
    nontrivial = [i for i in range(ndim) if max(pa[i], pb[i]) > 1]
    if diff != nontrivial[: len(diff)]:
        raise DimensionError(
            f"{name}: broadcasting of {sa} with {sb} is not limited to leading axes"
        )


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Reduce a broadcast gradient back to the operand's shape."""
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, (s, gs) in enumerate(zip(shape, g.shape)) if s == 1 and gs != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g.reshape(shape)


def _reduce_leading(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    return g


# ---------------------------------------------------------------------------
# Elementwise binary ops
# ---------------------------------------------------------------------------


def add(a: Tensor, b: Tensor) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    _check_broadcast(a.shape, b.shape, "add")
    data = a.data + b.data

    def backward_fn(g: np.ndarray) -> None:
        _accumulate(a, _unbroadcast(g, a.shape))
        _accumulate(b, _unbroadcast(g, b.shape))

    return _make(data, (a, b), backward_fn, "add")


def sub(a: Tensor, b: Tensor) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    _check_broadcast(a.shape, b.shape, "sub")
    data = a.data - b.data

    def backward_fn(g: np.ndarray) -> None:
        _accumulate(a, _unbroadcast(g, a.shape))
        _accumulate(b, _unbroadcast(-g, b.shape))

    return _make(data, (a, b), backward_fn, "sub")


def mul(a: Tensor, b: Tensor) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    _check_broadcast(a.shape, b.shape, "mul")
    data = a.data * b.data

    def backward_fn(g: np.ndarray) -> None:
        _accumulate(a, _unbroadcast(g * b.data, a.shape))
        _accumulate(b, _unbroadcast(g * a.data, b.shape))

    return _make(data, (a, b), backward_fn, "mul")


def scale(a: Tensor, c: float) -> Tensor:
    a = _as_tensor(a)
    c = float(c)
    if not np.isfinite(c):
        raise NonFiniteError("non-finite scale factor")
    data = a.data * c

    def backward_fn(g: np.ndarray) -> None:
        _accumulate(a, g * c)

    return _make(data, (a,), backward_fn, "scale")


def neg(a: Tensor) -> Tensor:
    return scale(a, -1.0)


# ---------------------------------------------------------------------------
# Linear algebra
# ---------------------------------------------------------------------------


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """Matrix product, with optional stacked leading axes on one operand.

    Supported shapes: ``(m,k) @ (k,n)``, ``(..,m,k) @ (k,n)`` and
    ``(m,k) @ (..,k,n)``; leading axes must match exactly when both
    operands carry them.
    """
    a, b = _as_tensor(a), _as_tensor(b)
    if a.ndim < 2 or b.ndim < 2:
        raise DimensionError(f"matmul requires 2-D or stacked operands, got {a.shape} @ {b.shape}")
    if a.shape[-1] != b.shape[-2]:
        raise DimensionError(f"matmul inner dimensions differ: {a.shape} @ {b.shape}")
    la, lb = a.shape[:-2], b.shape[:-2]
    if la and lb and la != lb:
        raise DimensionError(f"matmul stacked axes differ: {a.shape} @ {b.shape}")
    data = np.matmul(a.data, b.data)

    def backward_fn(g: np.ndarray) -> None:
        if a.requires_grad:
            ga = np.matmul(g, np.swapaxes(b.data, -1, -2))
            _accumulate(a, _reduce_leading(ga, a.shape))
        if b.requires_grad:
            gb = np.matmul(np.swapaxes(a.data, -1, -2), g)
            _accumulate(b, _reduce_leading(gb, b.shape))

    return _make(data, (a, b), backward_fn, "matmul")


def matvec(f: Tensor, x: Tensor) -> Tensor:
    """Per-slot matrix-vector product: ``(..,p,q)`` with ``(..,q)`` -> ``(..,p)``.

    Leading axes must match exactly; this is the contraction of a field
    output against a control vector.
    """
    f, x = _as_tensor(f), _as_tensor(x)
    if f.ndim < 2 or x.ndim < 1 or f.shape[:-2] != x.shape[:-1] or f.shape[-1] != x.shape[-1]:
        raise DimensionError(f"matvec shapes incompatible: {f.shape} with {x.shape}")
    data = np.einsum("...pq,...q->...p", f.data, x.data)

    def backward_fn(g: np.ndarray) -> None:
        if f.requires_grad:
            _accumulate(f, np.einsum("...p,...q->...pq", g, x.data))
        if x.requires_grad:
            _accumulate(x, np.einsum("...pq,...p->...q", f.data, g))

    return _make(data, (f, x), backward_fn, "matvec")


def transpose_last2(a: Tensor) -> Tensor:
    a = _as_tensor(a)
    if a.ndim < 2:
        raise DimensionError(f"transpose_last2 requires ndim >= 2, got {a.shape}")
    data = np.swapaxes(a.data, -1, -2).copy()

    def backward_fn(g: np.ndarray) -> None:
        _accumulate(a, np.swapaxes(g, -1, -2))

    return _make(data, (a,), backward_fn, "transpose_last2")


# ---------------------------------------------------------------------------
# Nonlinearities
# ---------------------------------------------------------------------------


def relu(a: Tensor) -> Tensor:
    a = _as_tensor(a)
    mask = a.data > 0.0
    data = np.where(mask, a.data, 0.0)

    def backward_fn(g: np.ndarray) -> None:
        _accumulate(a, g * mask)

    return _make(data, (a,), backward_fn, "relu")


def tanh(a: Tensor) -> Tensor:
    a = _as_tensor(a)
    data = np.tanh(a.data)

    def backward_fn(g: np.ndarray) -> None:
        _accumulate(a, g * (1.0 - data * data))

    return _make(data, (a,), backward_fn, "tanh")


def absolute(a: Tensor) -> Tensor:
    a = _as_tensor(a)
    data = np.abs(a.data)

    def backward_fn(g: np.ndarray) -> None:
        _accumulate(a, g * np.sign(a.data))

    return _make(data, (a,), backward_fn, "absolute")


def softmax_rows(a: Tensor) -> Tensor:
    """Softmax along the last axis (each row sums to one)."""
    a = _as_tensor(a)
    if a.ndim < 2:
        raise DimensionError(f"softmax_rows requires ndim >= 2, got {a.shape}")
    shifted = a.data - a.data.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    data = e / e.sum(axis=-1, keepdims=True)

    def backward_fn(g: np.ndarray) -> None:
        inner = (g * data).sum(axis=-1, keepdims=True)
        _accumulate(a, data * (g - inner))

    return _make(data, (a,), backward_fn, "softmax_rows")


# ---------------------------------------------------------------------------
# Shape and reduction ops
# ---------------------------------------------------------------------------


def reshape(a: Tensor, shape: tuple[int, ...]) -> Tensor:
    a = _as_tensor(a)
    try:
        data = a.data.reshape(shape)
    except ValueError as exc:
        raise DimensionError(f"cannot reshape {a.shape} to {shape}") from exc

    def backward_fn(g: np.ndarray) -> None:
        _accumulate(a, g.reshape(a.shape))

    return _make(data, (a,), backward_fn, "reshape")


def sum_all(a: Tensor) -> Tensor:
    a = _as_tensor(a)
    data = np.asarray(a.data.sum())

    def backward_fn(g: np.ndarray) -> None:
        _accumulate(a, np.broadcast_to(g, a.shape))

    return _make(data, (a,), backward_fn, "sum_all")


def mean_all(a: Tensor) -> Tensor:
    a = _as_tensor(a)
    n = a.data.size
    if n == 0:
        raise DimensionError("mean of an empty tensor")
    data = np.asarray(a.data.mean())

    def backward_fn(g: np.ndarray) -> None:
        _accumulate(a, np.broadcast_to(g / n, a.shape))

    return _make(data, (a,), backward_fn, "mean_all")


# ---------------------------------------------------------------------------
# Constant constructors
# ---------------------------------------------------------------------------


def constant(data) -> Tensor:
    return Tensor(np.asarray(data, dtype=np.float64))


def zeros(shape) -> Tensor:
    return Tensor(np.zeros(shape, dtype=np.float64))


def eye(n: int) -> Tensor:
    return Tensor(np.eye(n, dtype=np.float64))
