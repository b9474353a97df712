"""Dense float64 tensors with reverse-mode automatic differentiation.

The graph is recorded dynamically: every operation stores its parent
tensors plus a closure mapping the upstream gradient to parent
gradients, and ``Tensor.backward`` walks the graph in reverse
topological order. Everything runs in double precision so analytic
gradients can be compared against central finite differences at tight
tolerances.
"""

from __future__ import annotations

import contextlib

import numpy as np

from .errors import InputError, ShapeError

_grad_enabled = True


@contextlib.contextmanager
def no_grad():
    """Disable graph recording inside the block (inference paths)."""
    global _grad_enabled
    prev = _grad_enabled
    _grad_enabled = False
    try:
        yield
    finally:
        _grad_enabled = prev


def _unbroadcast(grad, shape):
    # Reduce a broadcast gradient back to the shape of the operand.
    extra = grad.ndim - len(shape)
    if extra:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad


class Tensor:
    """n-d array of float64 values, optionally tracked for gradients.

    Attributes:
        data: the underlying numpy array (always float64).
        grad: populated by ``backward``; same shape as ``data`` or None.
        requires_grad: whether gradients flow to this tensor.
    """

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward")

    def __init__(self, data, requires_grad=False):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad = None
        self.requires_grad = bool(requires_grad)
        self._parents = ()
        self._backward = None

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def size(self):
        return self.data.size

    def item(self):
        if self.data.size != 1:
            raise ShapeError(f"item() needs a single element, got shape {self.shape}")
        return float(self.data)

    def numpy(self):
        return self.data

    def detach(self):
        return Tensor(self.data.copy())

    def zero_grad(self):
        self.grad = None

    def backward(self):
        """Accumulate gradients of this scalar into every ancestor."""
        if self.data.size != 1:
            raise InputError(
                f"backward() starts from a scalar, got shape {self.shape}"
            )
        order = []
        seen = set()
        stack = [(self, False)]
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
        self.grad = np.ones_like(self.data)
        for node in reversed(order):
            if node._backward is None or node.grad is None:
                continue
            for parent, g in zip(node._parents, node._backward(node.grad)):
                if g is None or not parent.requires_grad:
                    continue
                parent.grad = g if parent.grad is None else parent.grad + g

    # -- operator sugar -------------------------------------------------

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

    def __pow__(self, exponent):
        return power(self, exponent)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, key):
        return getitem(self, key)

    def sum(self, axis=None, keepdims=False):
        return tensor_sum(self, axis=axis, keepdims=keepdims)

    def mean(self, axis=None, keepdims=False):
        return tensor_mean(self, axis=axis, keepdims=keepdims)

    def reshape(self, shape):
        return reshape(self, shape)

    def transpose(self, axes):
        return transpose(self, axes)

    def __repr__(self):
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}{flag})"


def _tensor(x):
    return x if isinstance(x, Tensor) else Tensor(x)


def _record(data, parents, grad_fn):
    out = Tensor(data)
    if _grad_enabled and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = tuple(parents)
        out._backward = grad_fn
    return out


# -- elementwise arithmetic ----------------------------------------------


def add(a, b):
    a, b = _tensor(a), _tensor(b)
    out = a.data + b.data

    def grad_fn(g):
        return _unbroadcast(g, a.data.shape), _unbroadcast(g, b.data.shape)

    return _record(out, (a, b), grad_fn)


def sub(a, b):
    a, b = _tensor(a), _tensor(b)
    out = a.data - b.data

    def grad_fn(g):
        return _unbroadcast(g, a.data.shape), _unbroadcast(-g, b.data.shape)

    return _record(out, (a, b), grad_fn)


def mul(a, b):
    a, b = _tensor(a), _tensor(b)
    out = a.data * b.data

    def grad_fn(g):
        return (
            _unbroadcast(g * b.data, a.data.shape),
            _unbroadcast(g * a.data, b.data.shape),
        )

    return _record(out, (a, b), grad_fn)


def div(a, b):
    a, b = _tensor(a), _tensor(b)
    out = a.data / b.data

    def grad_fn(g):
        return (
            _unbroadcast(g / b.data, a.data.shape),
            _unbroadcast(-g * a.data / (b.data * b.data), b.data.shape),
        )

    return _record(out, (a, b), grad_fn)


def power(a, exponent):
    a = _tensor(a)
    e = float(exponent)
    out = a.data**e

    def grad_fn(g):
        return (g * e * a.data ** (e - 1.0),)

    return _record(out, (a,), grad_fn)


def exp(a):
    a = _tensor(a)
    y = np.exp(a.data)

    def grad_fn(g):
        return (g * y,)

    return _record(y, (a,), grad_fn)


def log(a):
    a = _tensor(a)
    out = np.log(a.data)

    def grad_fn(g):
        return (g / a.data,)

    return _record(out, (a,), grad_fn)


def tanh(a):
    a = _tensor(a)
    y = np.tanh(a.data)

    def grad_fn(g):
        return (g * (1.0 - y * y),)

    return _record(y, (a,), grad_fn)


def sqrt(a):
    a = _tensor(a)
    y = np.sqrt(a.data)

    def grad_fn(g):
        return (g * 0.5 / y,)

    return _record(y, (a,), grad_fn)


def relu(a):
    a = _tensor(a)
    out = np.maximum(a.data, 0.0)

    def grad_fn(g):
        return (g * (a.data > 0.0),)

    return _record(out, (a,), grad_fn)


# -- shape manipulation ---------------------------------------------------


def matmul(a, b):
    a, b = _tensor(a), _tensor(b)
    if a.data.ndim < 2 or b.data.ndim < 2:
        raise ShapeError(
            f"matmul needs operands with at least 2 dimensions, "
            f"got {a.data.shape} x {b.data.shape}"
        )
    if a.data.shape[-1] != b.data.shape[-2]:
        raise ShapeError(
            f"matmul inner dimensions disagree: {a.data.shape} x {b.data.shape}"
        )
    out = a.data @ b.data

    def grad_fn(g):
        ga = _unbroadcast(g @ np.swapaxes(b.data, -1, -2), a.data.shape)
        gb = _unbroadcast(np.swapaxes(a.data, -1, -2) @ g, b.data.shape)
        return ga, gb

    return _record(out, (a, b), grad_fn)


def reshape(a, shape):
    a = _tensor(a)
    out = a.data.reshape(shape)

    def grad_fn(g):
        return (g.reshape(a.data.shape),)

    return _record(out, (a,), grad_fn)


def transpose(a, axes):
    a = _tensor(a)
    axes = tuple(axes)
    out = a.data.transpose(axes)
    inverse = tuple(np.argsort(axes))

    def grad_fn(g):
        return (g.transpose(inverse),)

    return _record(out, (a,), grad_fn)


def concat(tensors, axis=0):
    tensors = [_tensor(t) for t in tensors]
    if not tensors:
        raise InputError("concat needs at least one tensor")
    out = np.concatenate([t.data for t in tensors], axis=axis)
    sizes = [t.data.shape[axis] for t in tensors]
    splits = np.cumsum(sizes)[:-1]

    def grad_fn(g):
        return tuple(np.split(g, splits, axis=axis))

    return _record(out, tuple(tensors), grad_fn)


def _basic_key(key):
    parts = key if isinstance(key, tuple) else (key,)
    return all(isinstance(k, (int, slice)) or k is None or k is Ellipsis for k in parts)


def getitem(a, key):
    a = _tensor(a)
    out = a.data[key]

    def grad_fn(g):
        gz = np.zeros_like(a.data)
        if _basic_key(key):
            gz[key] += g
        else:
            np.add.at(gz, key, g)
        return (gz,)

    return _record(out, (a,), grad_fn)


def embedding(table, ids):
    """Row lookup into ``table`` (V, d) by an integer array of ids."""
    table = _tensor(table)
    ids = np.asarray(ids, dtype=np.int64)
    if table.data.ndim != 2:
        raise ShapeError(f"embedding table must be 2-d, got {table.data.shape}")
    if ids.size and (ids.min() < 0 or ids.max() >= table.data.shape[0]):
        raise IndexError(
            f"token id out of range for table of {table.data.shape[0]} rows"
        )
    out = table.data[ids]
    d = table.data.shape[-1]

    def grad_fn(g):
        gt = np.zeros_like(table.data)
        np.add.at(gt, ids.reshape(-1), g.reshape(-1, d))
        return (gt,)

    return _record(out, (table,), grad_fn)


def tensor_sum(a, axis=None, keepdims=False):
    a = _tensor(a)
    out = a.data.sum(axis=axis, keepdims=keepdims)

    def grad_fn(g):
        if axis is None:
            return (np.broadcast_to(g, a.data.shape),)
        gg = g if keepdims else np.expand_dims(g, axis)
        return (np.broadcast_to(gg, a.data.shape),)

    return _record(out, (a,), grad_fn)


def tensor_mean(a, axis=None, keepdims=False):
    a = _tensor(a)
    out = a.data.mean(axis=axis, keepdims=keepdims)
    count = a.data.size if axis is None else np.prod(
        [a.data.shape[i] for i in np.atleast_1d(axis)]
    )

    def grad_fn(g):
        if axis is None:
            return (np.broadcast_to(g / count, a.data.shape),)
        gg = g if keepdims else np.expand_dims(g, axis)
        return (np.broadcast_to(gg / count, a.data.shape),)

    return _record(out, (a,), grad_fn)


# -- composite neural ops --------------------------------------------------


def softmax(a, axis=-1):
    """Numerically stable softmax along ``axis`` (max subtraction)."""
    a = _tensor(a)
    x = a.data
    m = np.max(x, axis=axis, keepdims=True)
    e = np.exp(x - m)
    y = e / e.sum(axis=axis, keepdims=True)

    def grad_fn(g):
        inner = (g * y).sum(axis=axis, keepdims=True)
        return ((g - inner) * y,)

    return _record(y, (a,), grad_fn)


def layer_norm(x, gain, bias, eps=1e-5):
    """Normalize the last axis to zero mean and unit variance, then affine.

    A constant row maps to the (zero-initialized) bias because the
    centered values are exactly zero regardless of the variance floor.
    """
    x, gain, bias = _tensor(x), _tensor(gain), _tensor(bias)
    d = x.data.shape[-1]
    if gain.data.shape != (d,) or bias.data.shape != (d,):
        raise ShapeError(
            f"layer_norm affine shapes {gain.data.shape}/{bias.data.shape} "
            f"do not match feature width {d}"
        )
    mu = tensor_mean(x, axis=-1, keepdims=True)
    centered = sub(x, mu)
    var = tensor_mean(mul(centered, centered), axis=-1, keepdims=True)
    inv = power(add(var, eps), -0.5)
    return add(mul(mul(centered, inv), gain), bias)


def cross_entropy(logits, targets, ignore_index=None):
    """Mean negative log-likelihood of ``targets`` under row softmaxes.

    Rows whose target equals ``ignore_index`` contribute neither to the
    mean nor to the gradient.
    """
    logits = _tensor(logits)
    if logits.data.ndim != 2:
        raise ShapeError(f"cross_entropy expects (rows, vocab), got {logits.shape}")
    t = np.asarray(targets, dtype=np.int64)
    n, v = logits.data.shape
    if t.shape != (n,):
        raise ShapeError(
            f"cross_entropy targets shape {t.shape} does not match {n} rows"
        )
    valid = np.ones(n, dtype=bool) if ignore_index is None else t != ignore_index
    if not valid.any():
        raise InputError("cross_entropy: every target is ignored")
    rows = np.nonzero(valid)[0]
    tv = t[rows]
    if tv.min() < 0 or tv.max() >= v:
        bad = int(tv[(tv < 0) | (tv >= v)][0])
        raise IndexError(f"target id {bad} out of range for vocabulary of {v}")
    x = logits.data
    m = x.max(axis=1, keepdims=True)
    z = x - m
    lse = np.log(np.exp(z).sum(axis=1, keepdims=True)) + m
    logp = x - lse
    loss = -logp[rows, tv].mean()
    count = rows.size

    def grad_fn(g):
        gx = np.exp(logp)
        gx[rows, tv] -= 1.0
        gx[~valid] = 0.0
        return (gx * (g / count),)

    return _record(np.asarray(loss), (logits,), grad_fn)


def l2_normalize(x, axis=-1):
    """Scale rows along ``axis`` to unit Euclidean norm."""
    x = _tensor(x)
    sq = tensor_sum(mul(x, x), axis=axis, keepdims=True)
    # The 1e-24 floor is invisible at O(1) norms but keeps zero rows finite.
    return div(x, sqrt(add(sq, 1e-24)))
