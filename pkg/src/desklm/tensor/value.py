"""Dense float64 tensors with reverse-mode differentiation.

A ``Value`` wraps a numpy array and remembers how it was produced; calling
:func:`backward` on a scalar fills ``grad`` on every node that influenced
it. Graphs are rebuilt each step and never mutated after the forward pass,
so completed nodes are safe to read from multiple threads.

Gradient accumulation inside one backward pass follows graph construction
order, which makes repeated backward calls bitwise-identical.
"""

from __future__ import annotations

import numpy as np

from desklm.errors import ContractError, InputError, ShapeError
from desklm.tensor import kernels

IGNORE_INDEX = -100


class Value:
    """One node of the computation graph."""

    __slots__ = ("data", "grad", "op_tag", "parents", "_backward")

    def __init__(self, data, parents=(), op_tag="leaf"):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad = None  # None means "no gradient accumulated yet" (reads as zero)
        self.op_tag = op_tag
        self.parents = tuple(parents)
        self._backward = None

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    def item(self):
        return float(self.data)

    def detach(self):
        """A fresh leaf sharing this node's data; gradients stop here."""
        return Value(self.data, op_tag="detach-leaf")

    def grad_or_zeros(self):
        return self.grad if self.grad is not None else np.zeros_like(self.data)

    def __repr__(self):
        return f"Value(shape={self.shape}, op={self.op_tag!r})"

    # Arithmetic sugar; scalars and ndarrays are wrapped as constant leaves.
    def __add__(self, other):
        return add(self, as_value(other))

    def __radd__(self, other):
        return add(as_value(other), self)

    def __sub__(self, other):
        return add(self, neg(as_value(other)))

    def __rsub__(self, other):
        return add(as_value(other), neg(self))

    def __mul__(self, other):
        return mul(self, as_value(other))

    def __rmul__(self, other):
        return mul(as_value(other), self)

    def __truediv__(self, other):
        if isinstance(other, Value):
            raise TypeError("division by Value is not supported; divide by a scalar")
        return mul(self, as_value(1.0 / float(other)))

    def __neg__(self):
        return neg(self)

    def __pow__(self, exponent):
        return power(self, exponent)

    def __matmul__(self, other):
        return matmul(self, as_value(other))

    def __getitem__(self, key):
        return take(self, key)


def as_value(x) -> Value:
    return x if isinstance(x, Value) else Value(x, op_tag="const")


def _unbroadcast(grad: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum `grad` over axes that numpy broadcasting introduced or stretched."""
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad.reshape(shape)


def _make(data, parents, op_tag, backward_fn) -> Value:
    out = Value(data, parents=parents, op_tag=op_tag)
    out._backward = backward_fn
    return out


def add(a: Value, b: Value) -> Value:
    data = a.data + b.data

    def bwd(dy):
        _accum(a, _unbroadcast(dy, a.data.shape))
        _accum(b, _unbroadcast(dy, b.data.shape))

    return _make(data, (a, b), "add", bwd)


def neg(a: Value) -> Value:
    def bwd(dy):
        _accum(a, -dy)

    return _make(-a.data, (a,), "neg", bwd)


def mul(a: Value, b: Value) -> Value:
    data = a.data * b.data

    def bwd(dy):
        _accum(a, _unbroadcast(dy * b.data, a.data.shape))
        _accum(b, _unbroadcast(dy * a.data, b.data.shape))

    return _make(data, (a, b), "mul", bwd)


def power(a: Value, exponent) -> Value:
    k = float(exponent)
    data = a.data**k

    def bwd(dy):
        _accum(a, dy * k * a.data ** (k - 1.0))

    return _make(data, (a,), "pow", bwd)


def matmul(a: Value, b: Value) -> Value:
    if a.ndim < 1 or b.ndim < 1 or a.data.shape[-1] != b.data.shape[-2 if b.ndim > 1 else 0]:
        raise ShapeError(f"matmul: inner extents disagree for shapes {a.shape} and {b.shape}")
    data = np.matmul(a.data, b.data)

    def bwd(dy):
        _accum(a, _unbroadcast(np.matmul(dy, b.data.swapaxes(-1, -2)), a.data.shape))
        _accum(b, _unbroadcast(np.matmul(a.data.swapaxes(-1, -2), dy), b.data.shape))

    return _make(data, (a, b), "matmul", bwd)


def reshape(a: Value, shape) -> Value:
    def bwd(dy):
        _accum(a, dy.reshape(a.data.shape))

    return _make(a.data.reshape(shape), (a,), "reshape", bwd)


def transpose(a: Value, axes) -> Value:
    axes = tuple(axes)
    inverse = tuple(np.argsort(axes))

    def bwd(dy):
        _accum(a, dy.transpose(inverse))

    return _make(a.data.transpose(axes), (a,), "transpose", bwd)


def take(a: Value, key) -> Value:
    def bwd(dy):
        g = np.zeros_like(a.data)
        np.add.at(g, key, dy)
        _accum(a, g)

    return _make(a.data[key], (a,), "take", bwd)


def vsum(a: Value, axis=None, keepdims=False) -> Value:
    data = a.data.sum(axis=axis, keepdims=keepdims)

    def bwd(dy):
        if axis is not None and not keepdims:
            dy = np.expand_dims(dy, axis)
        _accum(a, np.broadcast_to(dy, a.data.shape).copy())

    return _make(data, (a,), "sum", bwd)


def vmean(a: Value, axis=None, keepdims=False) -> Value:
    count = a.data.size if axis is None else np.prod([a.data.shape[i] for i in np.atleast_1d(axis)])
    return mul(vsum(a, axis=axis, keepdims=keepdims), as_value(1.0 / float(count)))


def log(a: Value) -> Value:
    def bwd(dy):
        _accum(a, dy / a.data)

    return _make(np.log(a.data), (a,), "log", bwd)


def tanh(a: Value) -> Value:
    data = np.tanh(a.data)

    def bwd(dy):
        _accum(a, dy * (1.0 - data * data))

    return _make(data, (a,), "tanh", bwd)


def gelu(a: Value) -> Value:
    """Smooth gating activation, tanh form with cubic constant 0.044715."""
    data = kernels.gelu_fwd(a.data)

    def bwd(dy):
        _accum(a, kernels.gelu_bwd(a.data, dy))

    return _make(data, (a,), "gelu", bwd)


def _rows(x: np.ndarray, axis: int):
    """View `x` with `axis` moved last and flattened to 2-d rows."""
    moved = np.moveaxis(x, axis, -1)
    return np.ascontiguousarray(moved).reshape(-1, moved.shape[-1]), moved.shape


def _unrows(rows: np.ndarray, moved_shape, axis: int):
    return np.moveaxis(rows.reshape(moved_shape), -1, axis)


def softmax(a: Value, axis: int = -1) -> Value:
    if not -a.ndim <= axis < a.ndim:
        raise ShapeError(f"softmax: axis {axis} invalid for shape {a.shape}")
    x2d, moved_shape = _rows(a.data, axis)
    y2d = kernels.softmax2d_fwd(x2d)
    data = _unrows(y2d, moved_shape, axis)

    def bwd(dy):
        dy2d, _ = _rows(dy, axis)
        _accum(a, _unrows(kernels.softmax2d_bwd(y2d, dy2d), moved_shape, axis))

    return _make(data, (a,), "softmax", bwd)


def log_softmax(a: Value, axis: int = -1) -> Value:
    if not -a.ndim <= axis < a.ndim:
        raise ShapeError(f"log_softmax: axis {axis} invalid for shape {a.shape}")
    moved = np.moveaxis(a.data, axis, -1)
    shifted = moved - moved.max(axis=-1, keepdims=True)
    logz = np.log(np.exp(shifted).sum(axis=-1, keepdims=True))
    data = np.moveaxis(shifted - logz, -1, axis)
    probs = np.moveaxis(np.exp(shifted - logz), -1, axis)

    def bwd(dy):
        total = dy.sum(axis=axis, keepdims=True)
        _accum(a, dy - probs * total)

    return _make(data, (a,), "log_softmax", bwd)


def layer_norm(x: Value, gamma: Value, beta: Value, eps: float) -> Value:
    """Normalize over the last axis to zero mean / unit variance, then affine."""
    from desklm.errors import ConfigError

    if eps <= 0:
        raise ConfigError(f"layer_norm: eps must be positive, got {eps}")
    h = x.data.shape[-1]
    if gamma.data.shape != (h,) or beta.data.shape != (h,):
        raise ShapeError(
            f"layer_norm: gain/bias shapes {gamma.shape}/{beta.shape} do not match width {h}"
        )
    x2d = np.ascontiguousarray(x.data.reshape(-1, h))
    y2d, xhat, rstd = kernels.layernorm2d_fwd(x2d, gamma.data, beta.data, eps)

    def bwd(dy):
        dy2d = np.ascontiguousarray(dy.reshape(-1, h))
        dx, dgamma, dbeta = kernels.layernorm2d_bwd(xhat, rstd, gamma.data, dy2d)
        _accum(x, dx.reshape(x.data.shape))
        _accum(gamma, dgamma)
        _accum(beta, dbeta)

    return _make(y2d.reshape(x.data.shape), (x, gamma, beta), "layer_norm", bwd)


def dropout(a: Value, p: float, rng: np.random.Generator) -> Value:
    """Inverted dropout; p == 0 returns the input node untouched."""
    if p == 0.0:
        return a
    keep = (rng.random(a.data.shape) >= p).astype(np.float64) / (1.0 - p)

    def bwd(dy):
        _accum(a, dy * keep)

    return _make(a.data * keep, (a,), "dropout", bwd)


def embedding(weight: Value, ids: np.ndarray) -> Value:
    """Gather rows of `weight` by integer id; backward scatter-adds."""
    ids = np.asarray(ids)
    vocab = weight.data.shape[0]
    if ids.size and (ids.min() < 0 or ids.max() >= vocab):
        raise InputError(f"embedding: id out of range for table of {vocab} rows")

    def bwd(dy):
        g = np.zeros_like(weight.data)
        np.add.at(g, ids, dy)
        _accum(weight, g)

    return _make(weight.data[ids], (weight,), "embedding", bwd)


def cross_entropy(logits: Value, targets, ignore_index: int = IGNORE_INDEX) -> Value:
    """Mean negative log-probability of the target class over non-ignored rows.

    `targets` is an integer vector, one class index per row of `logits`;
    rows marked `ignore_index` contribute neither value nor gradient. With
    every row ignored the result is exactly 0 with a zero gradient.
    """
    if logits.ndim != 2:
        raise ShapeError(f"cross_entropy: expected 2-d logits, got shape {logits.shape}")
    targets = np.asarray(targets, dtype=np.int64)
    if targets.shape != (logits.data.shape[0],):
        raise ShapeError(
            f"cross_entropy: {logits.data.shape[0]} rows but {targets.shape} targets"
        )
    k = logits.data.shape[1]
    valid = targets != ignore_index
    if valid.any() and (targets[valid].min() < 0 or targets[valid].max() >= k):
        raise InputError(f"cross_entropy: class index out of range [0, {k})")
    n_valid = int(valid.sum())

    shifted = logits.data - logits.data.max(axis=1, keepdims=True)
    logz = np.log(np.exp(shifted).sum(axis=1, keepdims=True))
    logp = shifted - logz

    if n_valid == 0:
        def bwd_empty(dy):
            _accum(logits, np.zeros_like(logits.data))

        return _make(0.0, (logits,), "cross_entropy", bwd_empty)

    rows = np.nonzero(valid)[0]
    loss = -logp[rows, targets[rows]].sum() / n_valid

    def bwd(dy):
        g = np.zeros_like(logits.data)
        g[rows] = np.exp(logp[rows])
        g[rows, targets[rows]] -= 1.0
        _accum(logits, g * (float(dy) / n_valid))

    return _make(loss, (logits,), "cross_entropy", bwd)


def bce_with_logits(logits: Value, targets: np.ndarray) -> Value:
    """Elementwise sigmoid binary cross-entropy against 0/1 targets (stable form)."""
    z = np.asarray(targets, dtype=np.float64)
    if z.shape != logits.data.shape:
        raise ShapeError(f"bce_with_logits: target shape {z.shape} != logits {logits.shape}")
    x = logits.data
    data = np.maximum(x, 0.0) - x * z + np.log1p(np.exp(-np.abs(x)))

    def bwd(dy):
        sig = 1.0 / (1.0 + np.exp(-x))
        _accum(logits, dy * (sig - z))

    return _make(data, (logits,), "bce_with_logits", bwd)


def _accum(node: Value, contribution: np.ndarray):
    if node.grad is None:
        node.grad = np.zeros_like(node.data)
    node.grad += contribution


def _topo_order(root: Value) -> list[Value]:
    """Parents-first order, deterministic in graph construction order."""
    order: list[Value] = []
    seen: set[int] = set()
    stack: list[tuple[Value, bool]] = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for parent in reversed(node.parents):
            if id(parent) not in seen:
                stack.append((parent, False))
    return order


def backward(loss: Value, accumulate: bool = False) -> None:
    """Fill `grad` on every node that influenced the scalar `loss`.

    By default grads of all participating nodes are reset first, so calling
    backward twice on the same graph gives identical results. Pass
    ``accumulate=True`` to sum into existing grads (micro-batch loops).
    """
    if loss.data.size != 1:
        raise ContractError(f"backward: loss must be scalar, got shape {loss.shape}")
    order = _topo_order(loss)
    if not accumulate:
        for node in order:
            node.grad = None
    _accum(loss, np.ones_like(loss.data))
    for node in reversed(order):
        if node._backward is not None:
            node._backward(node.grad)


class ParamStore:
    """Named parameter tensors with deterministic (lexicographic) iteration."""

    def __init__(self):
        self._entries: dict[str, Value] = {}

    def add(self, name: str, value: Value) -> Value:
        if name in self._entries:
            raise ContractError(f"parameter {name!r} already registered")
        self._entries[name] = value
        return value

    def __getitem__(self, name: str) -> Value:
        return self._entries[name]

    def __setitem__(self, name: str, value: Value) -> None:
        self.add(name, value)

    def __contains__(self, name: str) -> bool:
        return name in self._entries

    def __len__(self) -> int:
        return len(self._entries)

    def names(self) -> list[str]:
        return sorted(self._entries)

    def items(self):
        for name in self.names():
            yield name, self._entries[name]

    def __iter__(self):
        return iter(self.names())

    def clear_grads(self) -> None:
        for v in self._entries.values():
            v.grad = None

    def total_size(self) -> int:
        return sum(v.data.size for v in self._entries.values())

    def merge(self, other: "ParamStore") -> "ParamStore":
        for name, v in other.items():
            self.add(name, v)
        return self

    def subset(self, prefix: str) -> "ParamStore":
        out = ParamStore()
        for name, v in self.items():
            if name.startswith(prefix):
                out.add(name, v)
        return out
