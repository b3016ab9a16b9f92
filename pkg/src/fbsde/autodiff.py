"""Dense float64 tensors with reverse-mode automatic differentiation.

A :class:`Tape` records every operation touching a tracked tensor as it
executes (define-by-run, Wengert list).  Values are 2-D row-major float64
arrays throughout: a scalar is shaped ``(1, 1)`` and a batch of M vectors is
``(M, k)``.  The operation set is intentionally small -- matrix products,
pointwise nonlinearities, column bookkeeping and a few reductions -- just
enough to unroll a stochastic rollout over N time steps and differentiate the
resulting scalar loss with respect to every registered parameter
(backpropagation through time).

Tensors made with :func:`constant` are untracked, and an operation whose
inputs are all untracked returns another untracked tensor.  The same
numerical code therefore runs with or without a tape (training vs. plain
evaluation).  Gradients flow only into tensors registered through
:meth:`Tape.parameter`.
"""

from __future__ import annotations

from typing import Callable, Iterable, Sequence

import numpy as np

from .errors import ParameterError, ShapeError

__all__ = [
    "Tensor",
    "Tape",
    "constant",
    "gradients",
    "add",
    "sub",
    "mul",
    "scale",
    "neg",
    "square",
    "tanh",
    "sigmoid",
    "sig",
    "sin",
    "cos",
    "exp",
    "log",
    "reciprocal",
    "matmul",
    "rowsum",
    "sum_all",
    "sum_squares",
    "hcat",
    "columns",
    "wrap_angles",
]

_TWO_PI = 2.0 * np.pi

# Largest double strictly below 1.  Saturating activations are clipped to the
# open interval (-1, 1) so that downstream logarithms of (1 - |out|) stay
# finite and hard control bounds hold strictly even in floating point.
_OPEN_ONE = np.nextafter(1.0, 0.0)


def _as_array(value) -> np.ndarray:
    arr = np.asarray(value, dtype=np.float64)
    if arr.ndim == 0:
        arr = arr.reshape(1, 1)
    elif arr.ndim == 1:
        arr = arr.reshape(1, -1)
    elif arr.ndim != 2:
        raise ShapeError(f"expected scalar, 1-D or 2-D data, got shape {arr.shape}")
    return arr


class Tensor:
    """A 2-D float64 value, optionally tracked on a tape."""

    __slots__ = ("value", "tape", "node")

    def __init__(self, value: np.ndarray, tape: "Tape | None" = None, node: int | None = None):
        self.value = value
        self.tape = tape
        self.node = node

    @property
    def shape(self) -> tuple[int, int]:
        return self.value.shape

    def item(self) -> float:
        if self.value.size != 1:
            raise ShapeError(f"item() needs a scalar tensor, got shape {self.shape}")
        return float(self.value[0, 0])

    def __repr__(self) -> str:
        tracked = "" if self.tape is None else f", node={self.node}"
        return f"Tensor(shape={self.shape}{tracked})"

    # arithmetic sugar; elementwise * and matrix @
    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        if isinstance(other, (int, float)):
            return scale(self, float(other))
        return mul(self, other)

    def __rmul__(self, other):
        return self.__mul__(other)

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)


def constant(value) -> Tensor:
    """Wrap data as an untracked tensor (no gradient ever flows into it)."""
    return Tensor(_as_array(value))


class Tape:
    """Append-only record of operations, replayed in reverse for gradients.

    Every recorded node stores the operation kind, the node ids of its
    tracked inputs, and a closure holding whatever forward values its
    backward rule needs.  Nodes are appended in execution order, so the
    record is already topologically sorted and a single reverse sweep visits
    each node exactly once.
    """

    __slots__ = ("_ops", "_param_nodes")

    def __init__(self):
        self._ops: list = []  # entry None marks a parameter leaf
        self._param_nodes: dict[str, tuple[int, tuple[int, int]]] = {}

    def __len__(self) -> int:
        return len(self._ops)

    @property
    def parameter_names(self) -> tuple[str, ...]:
        return tuple(self._param_nodes)

    def parameter(self, name: str, value) -> Tensor:
        """Register a trainable leaf.  Gradients are keyed by ``name``."""
        if name in self._param_nodes:
            raise ParameterError(f"parameter {name!r} already registered on this tape")
        arr = _as_array(value)
        node = len(self._ops)
        self._ops.append(None)
        self._param_nodes[name] = (node, arr.shape)
        return Tensor(arr, self, node)

    def _append(self, kind: str, out: np.ndarray, parents: tuple, backward: Callable) -> Tensor:
        node = len(self._ops)
        self._ops.append((kind, parents, backward))
        return Tensor(out, self, node)

    def gradients(self, loss: Tensor) -> dict[str, np.ndarray]:
        """Reverse pass: d(loss)/d(parameter) for every registered parameter.

        Parameters the loss does not depend on get a zero gradient of the
        right shape.  The tape is not consumed; calling this twice (or with
        a different scalar on the same tape) is fine.
        """
        if loss.tape is not self:
            raise ParameterError("loss tensor does not live on this tape")
        if loss.value.size != 1:
            raise ParameterError(f"loss must be scalar, got shape {loss.value.shape}")
        adjoint: dict[int, np.ndarray] = {loss.node: np.ones((1, 1))}
        for node in range(len(self._ops) - 1, -1, -1):
            entry = self._ops[node]
            if entry is None:  # parameter leaf: keep its adjoint for collection
                continue
            grad = adjoint.pop(node, None)
            if grad is None:
                continue
            _, parents, backward = entry
            for parent, contrib in zip(parents, backward(grad)):
                if parent is None or contrib is None:
                    continue
                held = adjoint.get(parent)
                # functional accumulation: backward rules may return views or
                # shared buffers, so never update in place
                adjoint[parent] = contrib if held is None else held + contrib
        out = {}
        for name, (node, shape) in self._param_nodes.items():
            grad = adjoint.get(node)
            out[name] = np.zeros(shape) if grad is None else np.array(grad, dtype=np.float64)
        return out


def gradients(loss: Tensor, tape: Tape) -> dict[str, np.ndarray]:
    """Module-level alias for :meth:`Tape.gradients`."""
    return tape.gradients(loss)


# ---------------------------------------------------------------------------
# recording machinery


def _wrap(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(_as_array(x))


def _emit(kind: str, out: np.ndarray, inputs: Sequence[Tensor], backward: Callable) -> Tensor:
    tape = None
    for t in inputs:
        if t.tape is None:
            continue
        if tape is None:
            tape = t.tape
        elif tape is not t.tape:
            raise ParameterError(f"operands of {kind!r} live on different tapes")
    if tape is None:
        return Tensor(out)
    parents = tuple(t.node for t in inputs)
    return tape._append(kind, out, parents, backward)


def _shrink(grad: np.ndarray, shape: tuple[int, int]) -> np.ndarray:
    """Sum a gradient over whichever axes numpy broadcast during the forward."""
    if grad.shape == shape:
        return grad
    if shape[0] == 1 and grad.shape[0] != 1:
        grad = grad.sum(axis=0, keepdims=True)
    if shape[1] == 1 and grad.shape[1] != 1:
        grad = grad.sum(axis=1, keepdims=True)
    return grad


# ---------------------------------------------------------------------------
# binary elementwise operations (exact shapes, scalars, or 1-sized axes)


def add(a, b) -> Tensor:
    a, b = _wrap(a), _wrap(b)
    try:
        out = a.value + b.value
    except ValueError as err:
        raise ShapeError(f"add: cannot broadcast {a.shape} with {b.shape}") from err
    sa, sb = a.value.shape, b.value.shape

    def backward(g):
        return _shrink(g, sa), _shrink(g, sb)

    return _emit("add", out, (a, b), backward)


def sub(a, b) -> Tensor:
    a, b = _wrap(a), _wrap(b)
    try:
        out = a.value - b.value
    except ValueError as err:
        raise ShapeError(f"sub: cannot broadcast {a.shape} with {b.shape}") from err
    sa, sb = a.value.shape, b.value.shape

    def backward(g):
        return _shrink(g, sa), _shrink(-g, sb)

    return _emit("sub", out, (a, b), backward)


def mul(a, b) -> Tensor:
    """Elementwise (Hadamard) product."""
    a, b = _wrap(a), _wrap(b)
    try:
        out = a.value * b.value
    except ValueError as err:
        raise ShapeError(f"mul: cannot broadcast {a.shape} with {b.shape}") from err
    av, bv = a.value, b.value

    def backward(g):
        return _shrink(g * bv, av.shape), _shrink(g * av, bv.shape)

    return _emit("mul", out, (a, b), backward)


def scale(a, c: float) -> Tensor:
    """Multiply by a compile-time python scalar."""
    a = _wrap(a)
    c = float(c)
    out = a.value * c

    def backward(g):
        return (g * c,)

    return _emit("scale", out, (a,), backward)


# ---------------------------------------------------------------------------
# unary elementwise operations


def neg(a) -> Tensor:
    a = _wrap(a)

    def backward(g):
        return (-g,)

    return _emit("neg", -a.value, (a,), backward)


def square(a) -> Tensor:
    a = _wrap(a)
    av = a.value

    def backward(g):
        return (2.0 * av * g,)

    return _emit("square", av * av, (a,), backward)


def tanh(a) -> Tensor:
    a = _wrap(a)
    out = np.tanh(a.value)
    np.clip(out, -_OPEN_ONE, _OPEN_ONE, out=out)

    def backward(g):
        return ((1.0 - out * out) * g,)

    return _emit("tanh", out, (a,), backward)


def _stable_expit(v: np.ndarray) -> np.ndarray:
    # evaluate exp only on the non-overflowing side
    ex = np.exp(-np.abs(v))
    pos = 1.0 / (1.0 + ex)
    return np.where(v >= 0.0, pos, 1.0 - pos)


def sigmoid(a) -> Tensor:
    """Logistic function 1 / (1 + e^-v)."""
    a = _wrap(a)
    out = _stable_expit(a.value)

    def backward(g):
        return (out * (1.0 - out) * g,)

    return _emit("sigmoid", out, (a,), backward)


def sig(a) -> Tensor:
    """Shifted sigmoid 2/(1 + e^-v) - 1 with range the open interval (-1, 1).

    The output is clipped to the largest representable doubles strictly
    inside (-1, 1), so saturated values never round to +-1 exactly.  The
    derivative is (1 - sig^2)/2.
    """
    a = _wrap(a)
    out = 2.0 * _stable_expit(a.value) - 1.0
    np.clip(out, -_OPEN_ONE, _OPEN_ONE, out=out)

    def backward(g):
        return (0.5 * (1.0 - out * out) * g,)

    return _emit("sig", out, (a,), backward)


def sin(a) -> Tensor:
    a = _wrap(a)
    av = a.value

    def backward(g):
        return (np.cos(av) * g,)

    return _emit("sin", np.sin(av), (a,), backward)


def cos(a) -> Tensor:
    a = _wrap(a)
    av = a.value

    def backward(g):
        return (-np.sin(av) * g,)

    return _emit("cos", np.cos(av), (a,), backward)


def exp(a) -> Tensor:
    a = _wrap(a)
    out = np.exp(a.value)

    def backward(g):
        return (out * g,)

    return _emit("exp", out, (a,), backward)


def log(a) -> Tensor:
    a = _wrap(a)
    av = a.value

    def backward(g):
        return (g / av,)

    return _emit("log", np.log(av), (a,), backward)


def reciprocal(a) -> Tensor:
    a = _wrap(a)
    out = 1.0 / a.value

    def backward(g):
        return (-out * out * g,)

    return _emit("reciprocal", out, (a,), backward)


# ---------------------------------------------------------------------------
# matrix / reduction / layout operations


def matmul(a, b) -> Tensor:
    a, b = _wrap(a), _wrap(b)
    if a.value.shape[1] != b.value.shape[0]:
        raise ShapeError(f"matmul: inner dimensions disagree, {a.shape} @ {b.shape}")
    av, bv = a.value, b.value

    def backward(g):
        return g @ bv.T, av.T @ g

    return _emit("matmul", av @ bv, (a, b), backward)


def rowsum(a) -> Tensor:
    """Sum along each row: (M, k) -> (M, 1)."""
    a = _wrap(a)
    shape = a.value.shape

    def backward(g):
        return (np.broadcast_to(g, shape),)

    return _emit("rowsum", a.value.sum(axis=1, keepdims=True), (a,), backward)


def sum_all(a) -> Tensor:
    """Sum of all entries as a (1, 1) scalar."""
    a = _wrap(a)
    shape = a.value.shape
    out = np.array([[a.value.sum()]])

    def backward(g):
        return (np.broadcast_to(g, shape),)

    return _emit("sum_all", out, (a,), backward)


def sum_squares(a) -> Tensor:
    """Sum of squared entries as a (1, 1) scalar; gradient is 2a."""
    a = _wrap(a)
    av = a.value
    out = np.array([[float(np.vdot(av, av))]])

    def backward(g):
        return ((2.0 * g[0, 0]) * av,)

    return _emit("sum_squares", out, (a,), backward)


def hcat(parts: Iterable) -> Tensor:
    """Concatenate tensors along columns."""
    tensors = [_wrap(p) for p in parts]
    if not tensors:
        raise ShapeError("hcat needs at least one tensor")
    rows = tensors[0].value.shape[0]
    for t in tensors:
        if t.value.shape[0] != rows:
            raise ShapeError(f"hcat: row counts differ, {t.shape} vs ({rows}, ...)")
    out = np.concatenate([t.value for t in tensors], axis=1)
    edges = np.cumsum([0] + [t.value.shape[1] for t in tensors])

    def backward(g):
        return tuple(g[:, edges[i]:edges[i + 1]] for i in range(len(tensors)))

    return _emit("hcat", out, tensors, backward)


def columns(a, start: int, stop: int) -> Tensor:
    """Select the column block [start, stop)."""
    a = _wrap(a)
    k = a.value.shape[1]
    if not (0 <= start < stop <= k):
        raise ShapeError(f"columns: [{start}, {stop}) out of range for {a.shape}")
    shape = a.value.shape

    def backward(g):
        full = np.zeros(shape)
        full[:, start:stop] = g
        return (full,)

    return _emit("columns", a.value[:, start:stop], (a,), backward)


def wrap_angles(a, indices: Sequence[int] | None = None) -> Tensor:
    """Wrap selected columns to (-pi, pi]; the derivative is the identity.

    The 2*pi*k shift is locally constant, so gradients pass through
    unchanged (valid everywhere except at the wrap boundary itself).
    """
    a = _wrap(a)
    out = a.value.copy()
    idx = slice(None) if indices is None else list(indices)
    x = out[:, idx]
    out[:, idx] = np.pi - np.mod(np.pi - x, _TWO_PI)

    def backward(g):
        return (g,)

    return _emit("wrap_angles", out, (a,), backward)
