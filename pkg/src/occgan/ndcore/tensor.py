"""Dense float64 tensors recorded on an explicit reverse-mode gradient tape."""

from __future__ import annotations

import itertools
import threading
import weakref
from typing import Any, Callable, Sequence

import numpy as np

DTYPE = np.float64


class NumericFailure(FloatingPointError):
    """A computation produced NaN or Inf."""


class TapeError(RuntimeError):
    """Misuse of a gradient tape (non-scalar loss, reused tape, ...)."""


class ShapeError(ValueError):
    """Operand shapes do not conform to the operation."""


_tape_ids = itertools.count(1)
_tapes: "weakref.WeakValueDictionary[int, GradientTape]" = weakref.WeakValueDictionary()
_local = threading.local()


def _stack() -> list:
    stack = getattr(_local, "stack", None)
    if stack is None:
        stack = _local.stack = []
    return stack


def active_tape() -> "GradientTape | None":
    stack = _stack()
    return stack[-1] if stack else None


def _check_finite(arr: np.ndarray, what: str) -> None:
    if not np.all(np.isfinite(arr)):
        raise NumericFailure(f"non-finite values produced by {what}")


class Tensor:
    """A dense array that can take part in a gradient tape.

    Tensors created outside an active tape, or derived only from inputs that do
    not require gradients, are plain values. Parameters are tensors created
    with ``requires_grad=True``; their ``grad`` is filled by ``backward``.
    """

    __slots__ = ("data", "grad", "requires_grad", "tape_id", "__weakref__")
    __array_priority__ = 100

    def __init__(self, data: Any, requires_grad: bool = False):
        arr = np.array(data, dtype=DTYPE)
        _check_finite(arr, "tensor construction")
        self.data = arr
        self.grad: np.ndarray | None = None
        self.requires_grad = requires_grad
        self.tape_id: int | None = None

    @classmethod
    def _wrap(cls, arr: np.ndarray) -> "Tensor":
        t = cls.__new__(cls)
        t.data = arr
        t.grad = None
        t.requires_grad = False
        t.tape_id = None
        return t

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    def item(self) -> float:
        if self.data.size != 1:
            raise ShapeError(f"item() on tensor of shape {self.shape}")
        return float(self.data.reshape(()))

    def numpy(self) -> np.ndarray:
        return self.data.copy()

    def __len__(self) -> int:
        return self.data.shape[0]

    def __repr__(self) -> str:
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}{flag})"

    # arithmetic sugar, all routed through forward_op
    def __add__(self, other):
        return forward_op("add", self, as_tensor(other))

    def __radd__(self, other):
        return forward_op("add", as_tensor(other), self)

    def __sub__(self, other):
        return forward_op("sub", self, as_tensor(other))

    def __rsub__(self, other):
        return forward_op("sub", as_tensor(other), self)

    def __mul__(self, other):
        if np.isscalar(other):
            return forward_op("scale", self, factor=float(other))
        return forward_op("mul", self, as_tensor(other))

    def __rmul__(self, other):
        return self.__mul__(other)

    def __neg__(self):
        return forward_op("scale", self, factor=-1.0)

    def __matmul__(self, other):
        return forward_op("matmul", self, as_tensor(other))

    def sum(self, axis: int | None = None) -> "Tensor":
        return forward_op("sum", self, axis=axis)

    def mean(self, axis: int | None = None) -> "Tensor":
        return forward_op("mean", self, axis=axis)

    def reshape(self, *shape) -> "Tensor":
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return forward_op("reshape", self, shape=shape)


def as_tensor(x: Any) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def parameter(data: Any) -> Tensor:
    return Tensor(data, requires_grad=True)


# ---------------------------------------------------------------------------
# primitives: each returns (output array, vjp) where vjp maps the output
# adjoint to a tuple of input adjoints (None where no gradient flows)

def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    if g.shape == shape:
        return g
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for axis, n in enumerate(shape):
        if n == 1 and g.shape[axis] != 1:
            g = g.sum(axis=axis, keepdims=True)
    return g


def _broadcast_shape(a: np.ndarray, b: np.ndarray, kind: str) -> None:
    try:
        np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise ShapeError(f"{kind}: cannot broadcast {a.shape} with {b.shape}") from None


def _matmul(a, b):
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul: {a.shape} @ {b.shape}")
    return a @ b, lambda g: (g @ b.T, a.T @ g)


def _add(a, b):
    _broadcast_shape(a, b, "add")
    return a + b, lambda g: (_unbroadcast(g, a.shape), _unbroadcast(g, b.shape))


def _sub(a, b):
    _broadcast_shape(a, b, "sub")
    return a - b, lambda g: (_unbroadcast(g, a.shape), _unbroadcast(-g, b.shape))


def _mul(a, b):
    _broadcast_shape(a, b, "mul")
    return a * b, lambda g: (_unbroadcast(g * b, a.shape), _unbroadcast(g * a, b.shape))


def _scale(a, factor: float):
    return a * factor, lambda g: (g * factor,)


def _reduce_vjp(a, axis, scale):
    def vjp(g):
        if axis is not None:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g * scale, a.shape).copy(),)
    return vjp


def _sum(a, axis=None):
    return np.asarray(a.sum(axis=axis)), _reduce_vjp(a, axis, 1.0)


def _mean(a, axis=None):
    n = a.size if axis is None else a.shape[axis]
    if n == 0:
        raise ShapeError("mean of empty tensor")
    return np.asarray(a.mean(axis=axis)), _reduce_vjp(a, axis, 1.0 / n)


def _sqdiff(a, b):
    _broadcast_shape(a, b, "sqdiff")
    d = a - b
    return d * d, lambda g: (_unbroadcast(2.0 * g * d, a.shape), _unbroadcast(-2.0 * g * d, b.shape))


def _sigmoid(a):
    out = 0.5 * (1.0 + np.tanh(0.5 * a))
    return out, lambda g: (g * out * (1.0 - out),)


def _tanh(a):
    out = np.tanh(a)
    return out, lambda g: (g * (1.0 - out * out),)


def _leaky_relu(a, slope: float = 0.2):
    pos = a > 0
    return np.where(pos, a, slope * a), lambda g: (np.where(pos, g, slope * g),)


def _reshape(a, shape):
    try:
        out = a.reshape(shape)
    except ValueError:
        raise ShapeError(f"reshape: {a.shape} -> {shape}") from None
    return out, lambda g: (g.reshape(a.shape),)


def _concat(*arrs, axis: int = 0):
    try:
        out = np.concatenate(arrs, axis=axis)
    except ValueError as exc:
        raise ShapeError(f"concat: {exc}") from None
    bounds = np.cumsum([x.shape[axis] for x in arrs])[:-1]
    return out, lambda g: tuple(np.split(g, bounds, axis=axis))


def _log(a):
    if np.any(a <= 0):
        raise NumericFailure("log of non-positive value")
    return np.log(a), lambda g: (g / a,)


def _clamp(a, lo: float | None = None, hi: float | None = None):
    out = np.clip(a, lo, hi)
    inside = np.ones(a.shape, dtype=bool)
    if lo is not None:
        inside &= a >= lo
    if hi is not None:
        inside &= a <= hi
    return out, lambda g: (np.where(inside, g, 0.0),)


_OPS: dict[str, Callable] = {
    "matmul": _matmul,
    "add": _add,
    "sub": _sub,
    "mul": _mul,
    "scale": _scale,
    "sum": _sum,
    "mean": _mean,
    "sqdiff": _sqdiff,
    "sigmoid": _sigmoid,
    "tanh": _tanh,
    "leaky_relu": _leaky_relu,
    "reshape": _reshape,
    "concat": _concat,
    "log": _log,
    "clamp": _clamp,
}

PRIMITIVES = tuple(_OPS)


def forward_op(op_kind: str, *inputs: Tensor, **attrs: Any) -> Tensor:
    """Evaluate a primitive and record it on the active tape, if any."""
    try:
        fn = _OPS[op_kind]
    except KeyError:
        raise ValueError(f"unknown primitive {op_kind!r}") from None
    out_arr, vjp = fn(*(t.data for t in inputs), **attrs)
    _check_finite(out_arr, op_kind)
    out = Tensor._wrap(out_arr)
    tape = active_tape()
    if tape is not None and any(t.requires_grad for t in inputs):
        tape._record(op_kind, inputs, out, vjp)
    return out


class _Record:
    __slots__ = ("kind", "inputs", "output", "vjp")

    def __init__(self, kind, inputs, output, vjp):
        self.kind = kind
        self.inputs = inputs
        self.output = output
        self.vjp = vjp


class GradientTape:
    """Ordered record of primitive operations.

    Use as a context manager; operations on gradient-requiring tensors inside
    the block are recorded. ``backward`` replays adjoints in exact reverse
    order and can be called once.
    """

    def __init__(self):
        self.id = next(_tape_ids)
        self.records: list[_Record] = []
        self.consumed = False
        self._produced: set[int] = set()
        _tapes[self.id] = self

    def __enter__(self) -> "GradientTape":
        _stack().append(self)
        return self

    def __exit__(self, *exc) -> None:
        stack = _stack()
        if stack and stack[-1] is self:
            stack.pop()

    def _record(self, kind, inputs, out: Tensor, vjp) -> None:
        if self.consumed:
            raise TapeError("recording on a consumed tape")
        out.requires_grad = True
        out.tape_id = self.id
        self._produced.add(id(out))
        self.records.append(_Record(kind, inputs, out, vjp))

    def backward(self, loss: Tensor) -> None:
        if self.consumed:
            raise TapeError("tape already consumed")
        if loss.size != 1:
            raise TapeError(f"backward needs a scalar loss, got shape {loss.shape}")
        if loss.tape_id != self.id:
            raise TapeError("loss was not recorded on this tape")
        adjoints: dict[int, np.ndarray] = {id(loss): np.ones_like(loss.data)}
        leaves: dict[int, Tensor] = {}
        for rec in reversed(self.records):
            g = adjoints.pop(id(rec.output), None)
            if g is None:
                for inp in rec.inputs:
                    if inp.requires_grad and id(inp) not in self._produced:
                        leaves[id(inp)] = inp
                continue
            grads = rec.vjp(g)
            for inp, gi in zip(rec.inputs, grads):
                if not inp.requires_grad:
                    continue
                key = id(inp)
                if key in self._produced:
                    if gi is not None:
                        prev = adjoints.get(key)
                        adjoints[key] = gi if prev is None else prev + gi
                    continue
                leaves[key] = inp
                if gi is None:
                    continue
                if inp.grad is None:
                    inp.grad = np.array(gi, dtype=DTYPE)
                else:
                    inp.grad = inp.grad + gi
        for leaf in leaves.values():
            if leaf.grad is None:
                leaf.grad = np.zeros_like(leaf.data)
            else:
                _check_finite(leaf.grad, "backward")
        self.consumed = True
        self.records = []
        self._produced = set()


def backward(loss: Tensor) -> None:
    """Backpropagate a scalar loss through the tape that recorded it."""
    if loss.tape_id is None:
        raise TapeError("loss is not on an active tape")
    tape = _tapes.get(loss.tape_id)
    if tape is None:
        raise TapeError("tape already consumed")
    tape.backward(loss)


# functional spellings of the primitive set
def matmul(a, b):
    return forward_op("matmul", as_tensor(a), as_tensor(b))


def sigmoid(x):
    return forward_op("sigmoid", as_tensor(x))


def tanh(x):
    return forward_op("tanh", as_tensor(x))


def leaky_relu(x, slope: float = 0.2):
    return forward_op("leaky_relu", as_tensor(x), slope=slope)


def log(x):
    return forward_op("log", as_tensor(x))


def clamp(x, lo: float | None = None, hi: float | None = None):
    return forward_op("clamp", as_tensor(x), lo=lo, hi=hi)


def sqdiff(a, b):
    return forward_op("sqdiff", as_tensor(a), as_tensor(b))


def concat(tensors: Sequence[Tensor], axis: int = 0):
    return forward_op("concat", *(as_tensor(t) for t in tensors), axis=axis)


def mean(x, axis: int | None = None):
    return forward_op("mean", as_tensor(x), axis=axis)


def sum_(x, axis: int | None = None):
    return forward_op("sum", as_tensor(x), axis=axis)
