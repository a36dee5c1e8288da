"""Dense float64 tensors with reverse-mode differentiation.

Only the operations the MMCI model needs are provided. Every op builds its
output eagerly and records a closure that pushes the upstream gradient back
to its inputs; :func:`backward` walks the recorded graph in reverse
topological order.
"""

from __future__ import annotations

from typing import Callable, Iterable, Sequence

import numpy as np

KL_CLAMP = 1e-12


class NumericError(ArithmeticError):
    """Raised when a forward value or gradient stops being finite."""


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward", "op")

    def __init__(self, data, requires_grad: bool = False, _parents: tuple = (), op: str = ""):
        arr = np.asarray(data, dtype=np.float64)
        if not np.all(np.isfinite(arr)):
            raise NumericError(f"non-finite value produced by {op or 'constructor'}")
        self.data = arr
        self.requires_grad = requires_grad
        self.grad: np.ndarray | None = None
        self._parents = _parents
        self._backward: Callable[[np.ndarray], None] | None = None
        self.op = op

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    def item(self) -> float:
        return float(self.data.reshape(-1)[0]) if self.data.size == 1 else _raise_not_scalar(self)

    def zero_grad(self) -> None:
        self.grad = None

    def detach(self) -> "Tensor":
        return Tensor(self.data.copy())

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, op={self.op!r}, requires_grad={self.requires_grad})"

    # operator sugar
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
        return scale(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)


def _raise_not_scalar(t: Tensor):
    raise ValueError(f"expected a single-element tensor, got shape {t.shape}")


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _accumulate(t: Tensor, g: np.ndarray) -> None:
    if not t.requires_grad:
        return
    if t.grad is None:
        t.grad = np.array(g, dtype=np.float64, copy=True)
    else:
        t.grad += g


def _make(data: np.ndarray, parents: Sequence[Tensor], op: str, backward_fn) -> Tensor:
    needs = any(p.requires_grad for p in parents)
    out = Tensor(data, requires_grad=needs, _parents=tuple(parents) if needs else (), op=op)
    if needs:
        out._backward = backward_fn
    return out


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum ``g`` down to ``shape`` after numpy broadcasting."""
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and g.shape[axis] != 1:
            g = g.sum(axis=axis, keepdims=True)
    return g


# ---------------------------------------------------------------- arithmetic


def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)

    def bw(g):
        _accumulate(a, _unbroadcast(g, a.shape))
        _accumulate(b, _unbroadcast(g, b.shape))

    return _make(a.data + b.data, (a, b), "add", bw)


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)

    def bw(g):
        _accumulate(a, _unbroadcast(g, a.shape))
        _accumulate(b, _unbroadcast(-g, b.shape))

    return _make(a.data - b.data, (a, b), "sub", bw)


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)

    def bw(g):
        _accumulate(a, _unbroadcast(g * b.data, a.shape))
        _accumulate(b, _unbroadcast(g * a.data, b.shape))

    return _make(a.data * b.data, (a, b), "mul", bw)


def scale(a, c: float) -> Tensor:
    a = as_tensor(a)
    c = float(c)

    def bw(g):
        _accumulate(a, g * c)

    return _make(a.data * c, (a,), "scale", bw)


def matmul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if a.data.ndim != 2 or b.data.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ValueError(f"matmul dimension mismatch: {a.shape} @ {b.shape}")

    def bw(g):
        _accumulate(a, g @ b.data.T)
        _accumulate(b, a.data.T @ g)

    return _make(a.data @ b.data, (a, b), "matmul", bw)


def concat(tensors: Sequence[Tensor]) -> Tensor:
    """Concatenate along the last axis."""
    tensors = [as_tensor(t) for t in tensors]
    widths = [t.shape[-1] for t in tensors]
    bounds = np.cumsum([0] + widths)

    def bw(g):
        for t, lo, hi in zip(tensors, bounds[:-1], bounds[1:]):
            _accumulate(t, g[..., lo:hi])

    return _make(np.concatenate([t.data for t in tensors], axis=-1), tensors, "concat", bw)


def columns(a: Tensor, lo: int, hi: int) -> Tensor:
    """Slice ``a[..., lo:hi]``."""

    def bw(g):
        full = np.zeros_like(a.data)
        full[..., lo:hi] = g
        _accumulate(a, full)

    return _make(a.data[..., lo:hi].copy(), (a,), "columns", bw)


# ---------------------------------------------------------------- nonlinearities


def elu(x: Tensor, alpha: float = 1.0) -> Tensor:
    x = as_tensor(x)
    neg = x.data < 0
    expm = np.expm1(np.where(neg, x.data, 0.0))
    out = np.where(neg, alpha * expm, x.data)

    def bw(g):
        _accumulate(x, g * np.where(neg, alpha * expm + alpha, 1.0))

    return _make(out, (x,), "elu", bw)


def relu(x: Tensor) -> Tensor:
    x = as_tensor(x)
    pos = x.data > 0

    def bw(g):
        _accumulate(x, g * pos)

    return _make(np.where(pos, x.data, 0.0), (x,), "relu", bw)


def tanh(x: Tensor) -> Tensor:
    x = as_tensor(x)
    out = np.tanh(x.data)

    def bw(g):
        _accumulate(x, g * (1.0 - out**2))

    return _make(out, (x,), "tanh", bw)


ACTIVATIONS = {"elu": elu, "relu": relu, "tanh": tanh}


def activation(x: Tensor, kind: str = "elu") -> Tensor:
    try:
        return ACTIVATIONS[kind](x)
    except KeyError:
        raise ValueError(f"unknown activation {kind!r}") from None


def log(x: Tensor) -> Tensor:
    x = as_tensor(x)
    if np.any(x.data <= 0):
        raise NumericError("log of a non-positive value")

    def bw(g):
        _accumulate(x, g / x.data)

    return _make(np.log(x.data), (x,), "log", bw)


def softmax(x: Tensor) -> Tensor:
    """Softmax over the last axis, stabilised by subtracting the row max."""
    x = as_tensor(x)
    if x.shape[-1] < 1:
        raise ValueError("softmax over an empty axis")
    z = x.data - x.data.max(axis=-1, keepdims=True)
    e = np.exp(z)
    out = e / e.sum(axis=-1, keepdims=True)

    def bw(g):
        dot = (g * out).sum(axis=-1, keepdims=True)
        _accumulate(x, out * (g - dot))

    return _make(out, (x,), "softmax", bw)


# ---------------------------------------------------------------- reductions


def sum_all(x: Tensor) -> Tensor:
    x = as_tensor(x)

    def bw(g):
        _accumulate(x, np.broadcast_to(g, x.shape))

    return _make(np.array(x.data.sum()), (x,), "sum", bw)


def mean(x: Tensor, axis: int | None = None) -> Tensor:
    x = as_tensor(x)
    if axis is None:
        n = x.data.size

        def bw(g):
            _accumulate(x, np.broadcast_to(g / n, x.shape))

        return _make(np.array(x.data.mean()), (x,), "mean", bw)

    n = x.shape[axis]

    def bw_axis(g):
        _accumulate(x, np.broadcast_to(np.expand_dims(g, axis) / n, x.shape))

    return _make(x.data.mean(axis=axis), (x,), "mean", bw_axis)


def mse(pred: Tensor, target) -> Tensor:
    """Mean of squared differences over all entries."""
    pred, target = as_tensor(pred), as_tensor(target)
    if pred.shape != target.shape:
        raise ValueError(f"mse shape mismatch: {pred.shape} vs {target.shape}")
    if pred.data.size == 0:
        raise ValueError("mse of an empty batch")
    diff = pred.data - target.data
    n = diff.size

    def bw(g):
        _accumulate(pred, g * 2.0 * diff / n)
        _accumulate(target, -g * 2.0 * diff / n)

    return _make(np.array(np.mean(diff**2)), (pred, target), "mse", bw)


def kl_uniform(probs: Tensor, num_classes: int | None = None) -> Tensor:
    """Row-wise KL(uniform || probs), averaged over rows.

    Probabilities are clamped at ``KL_CLAMP`` before the log; clamped entries
    pass no gradient.
    """
    probs = as_tensor(probs)
    p = np.atleast_2d(probs.data)
    c = p.shape[-1] if num_classes is None else int(num_classes)
    if c != p.shape[-1]:
        raise ValueError(f"expected {c} classes, got {p.shape[-1]}")
    if np.any(p < 0):
        raise NumericError("kl_uniform received a negative probability")
    clamped = np.maximum(p, KL_CLAMP)
    rows = p.shape[0]
    per_row = np.sum((1.0 / c) * (np.log(1.0 / c) - np.log(clamped)), axis=-1)

    def bw(g):
        grad = np.where(p > KL_CLAMP, -(1.0 / c) / clamped, 0.0) * (g / rows)
        _accumulate(probs, grad.reshape(probs.shape))

    return _make(np.array(per_row.mean()), (probs,), "kl_uniform", bw)


# ---------------------------------------------------------------- indexing


def gather_rows(x: Tensor, index: np.ndarray) -> Tensor:
    """Return ``x[index]`` for a 1-D integer index."""
    x = as_tensor(x)
    index = np.asarray(index, dtype=np.intp)

    def bw(g):
        full = np.zeros_like(x.data)
        np.add.at(full, index, g)
        _accumulate(x, full)

    return _make(x.data[index], (x,), "gather_rows", bw)


def scatter_add_rows(x: Tensor, index: np.ndarray, n_rows: int) -> Tensor:
    """Sum rows of ``x`` into ``n_rows`` buckets: ``out[index[e]] += x[e]``."""
    x = as_tensor(x)
    index = np.asarray(index, dtype=np.intp)
    out = np.zeros((n_rows,) + x.shape[1:])
    np.add.at(out, index, x.data)

    def bw(g):
        _accumulate(x, g[index])

    return _make(out, (x,), "scatter_add_rows", bw)


# ---------------------------------------------------------------- backward


class Tape:
    """Topologically ordered record of the operations reachable from a root."""

    def __init__(self, nodes: list[Tensor]):
        self.nodes = nodes

    @classmethod
    def from_root(cls, root: Tensor) -> "Tape":
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
            for parent in node._parents:
                if id(parent) not in seen:
                    stack.append((parent, False))
        return cls(order)

    def __len__(self) -> int:
        return len(self.nodes)

    def clear(self) -> None:
        for node in self.nodes:
            node._parents = ()
            node._backward = None
        self.nodes = []


def backward(loss: Tensor) -> None:
    """Accumulate d(loss)/d(t) into ``t.grad`` for every reachable leaf.

    Intermediate gradients are discarded and the graph is released, so a
    loss can be differentiated once.
    """
    if loss.data.size != 1:
        raise ValueError(f"backward needs a scalar loss, got shape {loss.shape}")
    if not loss.requires_grad:
        return
    tape = Tape.from_root(loss)
    interior = [n for n in tape.nodes if n._backward is not None]
    for n in interior:
        n.grad = None
    loss.grad = np.ones_like(loss.data)
    for node in reversed(tape.nodes):
        if node._backward is not None and node.grad is not None:
            node._backward(node.grad)
    for n in interior:
        n.grad = None
    for n in tape.nodes:
        if n.grad is not None and not np.all(np.isfinite(n.grad)):
            raise NumericError(f"non-finite gradient reached a {n.shape} leaf")
    tape.clear()


def zero_grad(params: Iterable[Tensor]) -> None:
    for p in params:
        p.grad = None
