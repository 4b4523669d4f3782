"""Minimal reverse-mode automatic differentiation over float64 numpy arrays.

A small tape: each op returns a Tensor holding its value, its parents and
a closure mapping the output gradient to parent gradients. ``backward``
topologically sorts the graph and accumulates gradients into every tensor
with ``requires_grad``. Everything runs in double precision so analytic
gradients can be validated against central finite differences tightly.

Forward values are computed identically whether or not a graph is being
recorded, so no-grad evaluation is bitwise equal to recorded evaluation.
"""

from __future__ import annotations

from contextlib import contextmanager

import numpy as np

_GRAD_ENABLED = True


@contextmanager
def no_grad():
    global _GRAD_ENABLED
    prev = _GRAD_ENABLED
    _GRAD_ENABLED = False
    try:
        yield
    finally:
        _GRAD_ENABLED = prev


def grad_enabled() -> bool:
    return _GRAD_ENABLED


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_vjp")

    def __init__(self, data, requires_grad: bool = False):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad = None
        self.requires_grad = requires_grad
        self._parents = ()
        self._vjp = None

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    def item(self) -> float:
        return float(self.data)

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def zero_grad(self):
        self.grad = None

    def backward(self, seed: np.ndarray | None = None):
        if seed is None:
            seed = np.ones_like(self.data)
        order = []
        seen = set()
        stack = [(self, False)]
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
        grads = {id(self): np.asarray(seed, dtype=np.float64)}
        for node in reversed(order):
            g = grads.pop(id(node), None)
            if g is None:
                continue
            if node.grad is None:
                node.grad = g.copy()
            else:
                node.grad = node.grad + g
            if node._vjp is None:
                continue
            for parent, pg in zip(node._parents, node._vjp(g)):
                if pg is None or not parent.requires_grad:
                    continue
                if id(parent) in grads:
                    grads[id(parent)] = grads[id(parent)] + pg
                else:
                    grads[id(parent)] = pg

    # operator sugar -------------------------------------------------------
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

    def __truediv__(self, other):
        return div(self, other)

    def __rtruediv__(self, other):
        return div(other, self)

    def __neg__(self):
        return mul(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)

    def __pow__(self, p):
        return power(self, p)

    def __getitem__(self, idx):
        return slice_(self, idx)

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, requires_grad={self.requires_grad})"


class Parameter(Tensor):
    def __init__(self, data):
        super().__init__(np.array(data, dtype=np.float64), requires_grad=True)


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _node(data, parents, vjp) -> Tensor:
    out = Tensor(data)
    if _GRAD_ENABLED and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = tuple(parents)
        out._vjp = vjp
    return out


def _unbroadcast(g: np.ndarray, shape: tuple) -> np.ndarray:
    if g.shape == shape:
        return g
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g.reshape(shape)


# element-wise arithmetic ----------------------------------------------------

def add(a, b):
    a, b = as_tensor(a), as_tensor(b)
    data = a.data + b.data
    return _node(data, (a, b), lambda g: (_unbroadcast(g, a.data.shape),
                                          _unbroadcast(g, b.data.shape)))


def sub(a, b):
    a, b = as_tensor(a), as_tensor(b)
    data = a.data - b.data
    return _node(data, (a, b), lambda g: (_unbroadcast(g, a.data.shape),
                                          _unbroadcast(-g, b.data.shape)))


def mul(a, b):
    a, b = as_tensor(a), as_tensor(b)
    data = a.data * b.data
    return _node(data, (a, b), lambda g: (_unbroadcast(g * b.data, a.data.shape),
                                          _unbroadcast(g * a.data, b.data.shape)))


def div(a, b):
    a, b = as_tensor(a), as_tensor(b)
    data = a.data / b.data
    return _node(data, (a, b), lambda g: (
        _unbroadcast(g / b.data, a.data.shape),
        _unbroadcast(-g * a.data / (b.data * b.data), b.data.shape)))


def power(x, p: float):
    x = as_tensor(x)
    data = x.data ** p
    return _node(data, (x,), lambda g: (g * p * x.data ** (p - 1),))


def exp(x):
    x = as_tensor(x)
    data = np.exp(x.data)
    return _node(data, (x,), lambda g: (g * data,))


def log(x):
    x = as_tensor(x)
    data = np.log(x.data)
    return _node(data, (x,), lambda g: (g / x.data,))


def sqrt(x):
    x = as_tensor(x)
    data = np.sqrt(x.data)
    return _node(data, (x,), lambda g: (g * 0.5 / data,))


def tanh(x):
    x = as_tensor(x)
    data = np.tanh(x.data)
    return _node(data, (x,), lambda g: (g * (1.0 - data * data),))


def _sigmoid_np(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def sigmoid(x):
    x = as_tensor(x)
    data = _sigmoid_np(x.data)
    return _node(data, (x,), lambda g: (g * data * (1.0 - data),))


def relu(x):
    x = as_tensor(x)
    data = np.maximum(x.data, 0.0)
    return _node(data, (x,), lambda g: (g * (x.data > 0),))


def clip(x, lo: float, hi: float):
    x = as_tensor(x)
    data = np.clip(x.data, lo, hi)
    inside = (x.data >= lo) & (x.data <= hi)
    return _node(data, (x,), lambda g: (g * inside,))


# reductions -----------------------------------------------------------------

def sum_(x, axis=None, keepdims=False):
    x = as_tensor(x)
    data = x.data.sum(axis=axis, keepdims=keepdims)

    def vjp(g):
        if axis is None:
            return (np.broadcast_to(g, x.data.shape).copy(),)
        gg = g if keepdims else np.expand_dims(g, axis)
        return (np.broadcast_to(gg, x.data.shape).copy(),)

    return _node(data, (x,), vjp)


def mean(x, axis=None, keepdims=False):
    x = as_tensor(x)
    if axis is None:
        count = x.data.size
    else:
        axes = axis if isinstance(axis, tuple) else (axis,)
        count = int(np.prod([x.data.shape[a] for a in axes]))
    return mul(sum_(x, axis=axis, keepdims=keepdims), 1.0 / count)


def softmax(x, axis: int = -1):
    x = as_tensor(x)
    shifted = x.data - x.data.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    data = e / e.sum(axis=axis, keepdims=True)

    def vjp(g):
        dot = (g * data).sum(axis=axis, keepdims=True)
        return ((g - dot) * data,)

    return _node(data, (x,), vjp)


# linear algebra / shape -----------------------------------------------------

def matmul(a, b):
    a, b = as_tensor(a), as_tensor(b)
    data = a.data @ b.data

    def vjp(g):
        ga = g @ b.data.swapaxes(-1, -2)
        gb = a.data.swapaxes(-1, -2) @ g
        return (_unbroadcast(ga, a.data.shape), _unbroadcast(gb, b.data.shape))

    return _node(data, (a, b), vjp)


def reshape(x, shape):
    x = as_tensor(x)
    data = x.data.reshape(shape)
    return _node(data, (x,), lambda g: (g.reshape(x.data.shape),))


def transpose(x, axes):
    x = as_tensor(x)
    data = x.data.transpose(axes)
    inv = np.argsort(axes)
    return _node(data, (x,), lambda g: (g.transpose(inv),))


def concat(tensors, axis: int = 0):
    tensors = [as_tensor(t) for t in tensors]
    data = np.concatenate([t.data for t in tensors], axis=axis)
    sizes = [t.data.shape[axis] for t in tensors]
    bounds = np.cumsum([0] + sizes)

    def vjp(g):
        out = []
        for i in range(len(tensors)):
            sl = [slice(None)] * g.ndim
            sl[axis] = slice(bounds[i], bounds[i + 1])
            out.append(g[tuple(sl)])
        return tuple(out)

    return _node(data, tensors, vjp)


def slice_(x, idx):
    x = as_tensor(x)
    data = x.data[idx]

    def vjp(g):
        gx = np.zeros_like(x.data)
        gx[idx] = g
        return (gx,)

    return _node(data, (x,), vjp)


def take_rows(x, indices):
    """Advanced integer indexing along axis 0 (duplicates accumulate)."""
    x = as_tensor(x)
    idx = np.asarray(indices, dtype=np.int64)
    data = x.data[idx]

    def vjp(g):
        gx = np.zeros_like(x.data)
        np.add.at(gx, idx, g)
        return (gx,)

    return _node(data, (x,), vjp)


def pad2d(x, before_rows: int, after_rows: int, before_cols: int, after_cols: int):
    """Zero-pad the leading two axes of (H, W, ...) data."""
    x = as_tensor(x)
    widths = [(before_rows, after_rows), (before_cols, after_cols)]
    widths += [(0, 0)] * (x.data.ndim - 2)
    data = np.pad(x.data, widths)
    h, w = x.data.shape[0], x.data.shape[1]

    def vjp(g):
        return (g[before_rows:before_rows + h, before_cols:before_cols + w],)

    return _node(data, (x,), vjp)


def stack(tensors, axis: int = 0):
    expanded = []
    for t in tensors:
        t = as_tensor(t)
        expanded.append(reshape(t, t.data.shape[:axis] + (1,) + t.data.shape[axis:]))
    return concat(expanded, axis=axis)
