"""Dense tensors with reverse-mode differentiation.

Values are stored in the storage dtype (float32 unless changed with
:func:`precision`); every op computes in float64 and rounds its result once.
Binary ops accept operands of identical shape, or a scalar against any
tensor. Anything else must be reshaped/expanded explicitly by the caller.
"""

from __future__ import annotations

import contextlib
import math
from typing import Callable, Iterable, Sequence

import numpy as np

from . import special

_state = {"dtype": np.dtype(np.float32), "grad": True}


class ShapeError(ValueError):
    """Operand shapes do not conform."""


@contextlib.contextmanager
def precision(dtype):
    """Temporarily change the storage dtype (used for gradient checking)."""
    prev = _state["dtype"]
    _state["dtype"] = np.dtype(dtype)
    try:
        yield
    finally:
        _state["dtype"] = prev


@contextlib.contextmanager
def no_grad():
    prev = _state["grad"]
    _state["grad"] = False
    try:
        yield
    finally:
        _state["grad"] = prev


def storage_dtype() -> np.dtype:
    return _state["dtype"]


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward", "op")

    def __init__(self, data, requires_grad: bool = False):
        self.data = np.array(data, dtype=_state["dtype"])
        self.grad = None
        self.requires_grad = bool(requires_grad)
        self._parents: tuple = ()
        self._backward: Callable | None = None
        self.op = "leaf"

    @property
    def shape(self) -> tuple:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        if self.data.size != 1:
            raise ShapeError(f"item() needs a single element, got shape {self.shape}")
        return float(self.data.reshape(()))

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def zero_grad(self) -> None:
        self.grad = None

    def __repr__(self):
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}, op={self.op}{flag})"

    # operator sugar -----------------------------------------------------
    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        return div(self, other)

    def __rtruediv__(self, other):
        return div(other, self)

    def __neg__(self):
        return mul(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, index):
        return take(self, index)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)

    def transpose(self, *axes):
        return transpose(self, axes or None)

    def sum(self, axis=None, keepdims=False):
        return sum(self, axis, keepdims)

    def mean(self, axis=None, keepdims=False):
        return mean(self, axis, keepdims)

    def backward(self):
        backward(self)


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def parameter(data) -> Tensor:
    return Tensor(data, requires_grad=True)


def _f64(t: Tensor) -> np.ndarray:
    return t.data.astype(np.float64, copy=False)


def _node(value: np.ndarray, parents: Sequence[Tensor], backward_fn, op: str) -> Tensor:
    out = Tensor(value)
    out.op = op
    if _state["grad"] and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = tuple(parents)
        out._backward = backward_fn
    return out


def _check_finite_result(value, op):
    if not np.all(np.isfinite(value)):
        raise FloatingPointError(f"{op}: non-finite result")


# ---------------------------------------------------------------------------
# elementwise binary ops (identical shapes, or scalar vs tensor)
# ---------------------------------------------------------------------------


def _conform(a, b, op):
    a, b = as_tensor(a), as_tensor(b)
    if a.shape != b.shape and a.ndim != 0 and b.ndim != 0:
        raise ShapeError(f"{op}: shape mismatch {a.shape} vs {b.shape}")
    return a, b


def _fit(grad: np.ndarray, shape: tuple) -> np.ndarray:
    if grad.shape == shape:
        return grad
    return np.asarray(grad.sum()).reshape(shape)


def add(a, b) -> Tensor:
    a, b = _conform(a, b, "add")

    def back(g):
        return _fit(g, a.shape), _fit(g, b.shape)

    return _node(_f64(a) + _f64(b), (a, b), back, "add")


def sub(a, b) -> Tensor:
    a, b = _conform(a, b, "sub")

    def back(g):
        return _fit(g, a.shape), _fit(-g, b.shape)

    return _node(_f64(a) - _f64(b), (a, b), back, "sub")


def mul(a, b) -> Tensor:
    a, b = _conform(a, b, "mul")
    x, y = _f64(a), _f64(b)

    def back(g):
        return _fit(g * y, a.shape), _fit(g * x, b.shape)

    return _node(x * y, (a, b), back, "mul")


def div(a, b) -> Tensor:
    a, b = _conform(a, b, "div")
    x, y = _f64(a), _f64(b)
    if np.any(y == 0):
        raise ZeroDivisionError("div: zero in denominator")
    out = x / y

    def back(g):
        return _fit(g / y, a.shape), _fit(-g * out / y, b.shape)

    return _node(out, (a, b), back, "div")


# ---------------------------------------------------------------------------
# elementwise unary ops
# ---------------------------------------------------------------------------


def exp(a: Tensor) -> Tensor:
    out = np.exp(_f64(a))
    _check_finite_result(out, "exp")
    return _node(out, (a,), lambda g: (g * out,), "exp")


def log(a: Tensor) -> Tensor:
    x = _f64(a)
    if np.any(x <= 0):
        raise ValueError("log: argument must be positive")
    return _node(np.log(x), (a,), lambda g: (g / x,), "log")


def tanh(a: Tensor) -> Tensor:
    out = np.tanh(_f64(a))
    return _node(out, (a,), lambda g: (g * (1.0 - out * out),), "tanh")


def _sigmoid(x):
    return 0.5 * (1.0 + np.tanh(0.5 * x))


def softplus(a: Tensor) -> Tensor:
    """log(1 + exp(x)) in the overflow-safe form max(x,0) + log1p(exp(-|x|))."""
    x = _f64(a)
    out = np.maximum(x, 0.0) + np.log1p(np.exp(-np.abs(x)))
    return _node(out, (a,), lambda g: (g * _sigmoid(x),), "softplus")


_GELU_C = math.sqrt(2.0 / math.pi)


def gelu(a: Tensor) -> Tensor:
    """Tanh-approximated GELU."""
    x = _f64(a)
    inner = _GELU_C * (x + 0.044715 * x**3)
    t = np.tanh(inner)
    out = 0.5 * x * (1.0 + t)

    def back(g):
        dinner = _GELU_C * (1.0 + 3 * 0.044715 * x * x)
        return (g * (0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * dinner),)

    return _node(out, (a,), back, "gelu")


def digamma(a: Tensor) -> Tensor:
    x = _f64(a)
    return _node(special.digamma(x), (a,), lambda g: (g * special.trigamma(x),), "digamma")


def lgamma(a: Tensor) -> Tensor:
    x = _f64(a)
    return _node(special.lgamma(x), (a,), lambda g: (g * special.digamma(x),), "lgamma")


# ---------------------------------------------------------------------------
# linear algebra
# ---------------------------------------------------------------------------


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """(..., m, k) @ (..., k, n) with identical leading dims; no broadcasting."""
    a, b = as_tensor(a), as_tensor(b)
    if (
        a.ndim < 2
        or a.ndim != b.ndim
        or a.shape[:-2] != b.shape[:-2]
        or a.shape[-1] != b.shape[-2]
    ):
        raise ShapeError(f"matmul: shape mismatch {a.shape} vs {b.shape}")
    x, y = _f64(a), _f64(b)

    def back(g):
        return g @ np.swapaxes(y, -1, -2), np.swapaxes(x, -1, -2) @ g

    return _node(x @ y, (a, b), back, "matmul")


def linear(x: Tensor, weight: Tensor, bias: Tensor | None = None) -> Tensor:
    """x (n, i) @ weight (i, o) + bias (o,), the bias added to every row."""
    if x.ndim != 2 or weight.ndim != 2 or x.shape[1] != weight.shape[0]:
        raise ShapeError(f"linear: shape mismatch {x.shape} vs {weight.shape}")
    if bias is not None and bias.shape != (weight.shape[1],):
        raise ShapeError(f"linear: bias shape {bias.shape} vs weight {weight.shape}")
    xv, wv = _f64(x), _f64(weight)
    out = xv @ wv
    if bias is not None:
        out = out + _f64(bias)

    def back(g):
        grads = [g @ wv.T, xv.T @ g]
        if bias is not None:
            grads.append(g.sum(axis=0))
        return tuple(grads)

    parents = (x, weight) if bias is None else (x, weight, bias)
    return _node(out, parents, back, "linear")


# ---------------------------------------------------------------------------
# reductions and normalisations
# ---------------------------------------------------------------------------


def _norm_axis(axis, ndim):
    if axis is None:
        return tuple(range(ndim))
    axes = (axis,) if isinstance(axis, int) else tuple(axis)
    return tuple(ax % ndim for ax in axes)


def sum(a: Tensor, axis=None, keepdims: bool = False) -> Tensor:  # noqa: A001
    x = _f64(a)
    axes = _norm_axis(axis, a.ndim)
    out = x.sum(axis=axes, keepdims=keepdims)

    def back(g):
        if not keepdims:
            g = np.expand_dims(g, axes)
        return (np.broadcast_to(g, x.shape).copy(),)

    return _node(out, (a,), back, "sum")


def mean(a: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    axes = _norm_axis(axis, a.ndim)
    count = int(np.prod([a.shape[ax] for ax in axes])) if axes else 1
    return mul(sum(a, axis, keepdims), 1.0 / count)


def softmax(a: Tensor) -> Tensor:
    """Softmax over the last axis (row softmax for matrices)."""
    x = _f64(a)
    shifted = np.exp(x - x.max(axis=-1, keepdims=True))
    out = shifted / shifted.sum(axis=-1, keepdims=True)

    def back(g):
        return (out * (g - (g * out).sum(axis=-1, keepdims=True)),)

    return _node(out, (a,), back, "softmax")


def layer_norm(a: Tensor, gamma: Tensor, beta: Tensor, eps: float = 1e-5) -> Tensor:
    """Normalise the last axis, then scale and shift by (D,) vectors."""
    d = a.shape[-1]
    if gamma.shape != (d,) or beta.shape != (d,):
        raise ShapeError(f"layer_norm: shape mismatch {a.shape} vs {gamma.shape}/{beta.shape}")
    x = _f64(a)
    mu = x.mean(axis=-1, keepdims=True)
    xc = x - mu
    inv = 1.0 / np.sqrt((xc * xc).mean(axis=-1, keepdims=True) + eps)
    xhat = xc * inv
    gv = _f64(gamma)
    out = xhat * gv + _f64(beta)

    def back(g):
        lead = tuple(range(g.ndim - 1))
        gx = g * gv
        dx = inv * (gx - gx.mean(axis=-1, keepdims=True) - xhat * (gx * xhat).mean(axis=-1, keepdims=True))
        return dx, (g * xhat).sum(axis=lead), g.sum(axis=lead)

    return _node(out, (a, gamma, beta), back, "layer_norm")


# ---------------------------------------------------------------------------
# shape manipulation
# ---------------------------------------------------------------------------


def reshape(a: Tensor, shape: Sequence[int]) -> Tensor:
    shape = tuple(shape)
    try:
        out = _f64(a).reshape(shape)
    except ValueError:
        raise ShapeError(f"reshape: cannot reshape {a.shape} to {shape}") from None
    src = a.shape
    return _node(out, (a,), lambda g: (g.reshape(src),), "reshape")


def transpose(a: Tensor, axes: Sequence[int] | None = None) -> Tensor:
    axes = tuple(reversed(range(a.ndim))) if axes is None else tuple(axes)
    inverse = tuple(np.argsort(axes))
    return _node(_f64(a).transpose(axes), (a,), lambda g: (g.transpose(inverse),), "transpose")


def expand(a: Tensor, shape: Sequence[int]) -> Tensor:
    """Explicit broadcast of size-1 axes (same rank) to ``shape``."""
    shape = tuple(shape)
    if a.ndim != len(shape) or any(s != t and s != 1 for s, t in zip(a.shape, shape)):
        raise ShapeError(f"expand: shape mismatch {a.shape} vs {shape}")
    axes = tuple(i for i, (s, t) in enumerate(zip(a.shape, shape)) if s != t)
    out = np.broadcast_to(_f64(a), shape).copy()
    return _node(out, (a,), lambda g: (g.sum(axis=axes, keepdims=True),), "expand")


def concat(tensors: Iterable[Tensor], axis: int = 0) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    if not tensors:
        raise ShapeError("concat: nothing to concatenate")
    ref = tensors[0].shape
    axis = axis % len(ref)
    for t in tensors[1:]:
        if t.ndim != len(ref) or t.shape[:axis] + t.shape[axis + 1 :] != ref[:axis] + ref[axis + 1 :]:
            raise ShapeError(f"concat: shape mismatch {ref} vs {t.shape}")
    sizes = [t.shape[axis] for t in tensors]
    cuts = np.cumsum(sizes)[:-1]

    def back(g):
        return tuple(np.split(g, cuts, axis=axis))

    return _node(np.concatenate([_f64(t) for t in tensors], axis=axis), tensors, back, "concat")


def take(a: Tensor, index) -> Tensor:
    """Basic numpy indexing; the gradient scatters back into zeros."""
    x = _f64(a)
    out = x[index]

    def back(g):
        full = np.zeros_like(x)
        np.add.at(full, index, g)
        return (full,)

    return _node(np.array(out), (a,), back, "take")


# ---------------------------------------------------------------------------
# backward pass and optimiser
# ---------------------------------------------------------------------------


def _topological(root: Tensor) -> list[Tensor]:
    order, seen = [], set()
    stack = [(root, False)]
    while stack:
        node, done = stack.pop()
        if done:
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


def backward(loss: Tensor) -> None:
    """Accumulate d(loss)/d(leaf) into ``.grad`` of every reachable leaf."""
    if loss.size != 1:
        raise ShapeError(f"backward: loss must be a scalar, got shape {loss.shape}")
    if not loss.requires_grad:
        raise ValueError("backward: loss does not depend on any parameter")
    grads = {id(loss): np.ones(loss.shape, dtype=np.float64)}
    for node in reversed(_topological(loss)):
        g = grads.pop(id(node), None)
        if g is None:
            continue
        if node._backward is None:
            acc = g.astype(node.data.dtype)
            node.grad = acc if node.grad is None else node.grad + acc
            continue
        for parent, pg in zip(node._parents, node._backward(g)):
            if pg is None or not parent.requires_grad:
                continue
            key = id(parent)
            grads[key] = pg if key not in grads else grads[key] + pg


class SGD:
    """Plain stochastic gradient descent: p <- p - lr * grad."""

    def __init__(self, params: Iterable[Tensor], lr: float):
        if not lr >= 0:
            raise ValueError(f"learning rate must be non-negative, got {lr}")
        self.params = list(params)
        self.lr = float(lr)

    def step(self) -> None:
        sgd_step(self.params, self.lr)

    def zero_grad(self) -> None:
        for p in self.params:
            p.grad = None


def sgd_step(params: Iterable[Tensor], lr: float) -> None:
    """In-place update of every parameter, then clear its gradient."""
    params = list(params)
    for i, p in enumerate(params):
        if p.grad is None:
            raise ValueError(f"sgd_step: parameter {i} {p.shape} has no gradient")
    for p in params:
        p.data = (p.data.astype(np.float64) - lr * p.grad.astype(np.float64)).astype(p.data.dtype)
        p.grad = None
