"""Minimal reverse-mode automatic differentiation over numpy arrays.

Only the operations needed by the training objectives are implemented:
elementwise arithmetic with broadcasting, matmul, exp/tanh/sqrt/abs,
max/min, relu, slicing, reshape and reductions. The module-level helpers
(`exp`, `maximum`, ...) dispatch on their argument type, so the same loss
code runs on plain arrays (evaluation) and on `Tensor`s (training).
"""
from __future__ import annotations

import numpy as np


def _unbroadcast(grad: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum `grad` down to `shape`, undoing numpy broadcasting."""
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


class Tensor:
    """A node in a dynamically recorded computation graph."""

    # make numpy defer to our reflected operators
    __array_ufunc__ = None

    def __init__(self, data, parents=(), backward=None):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad = None
        self._parents = parents
        self._backward = backward

    @property
    def shape(self):
        return self.data.shape

    def __repr__(self):
        return f"Tensor(shape={self.data.shape})"

    def backward(self):
        """Accumulate d(self)/d(node) into `.grad` of every ancestor."""
        order, seen = [], set()

        def visit(node):
            if id(node) in seen:
                return
            seen.add(id(node))
            for p in node._parents:
                visit(p)
            order.append(node)

        visit(self)
        for node in order:
            node.grad = np.zeros_like(node.data)
        self.grad = np.ones_like(self.data)
        for node in reversed(order):
            if node._backward is not None:
                node._backward(node.grad)

    # -- arithmetic ---------------------------------------------------

    def __add__(self, other):
        other = as_tensor(other)
        out = Tensor(self.data + other.data, (self, other))

        def bwd(g):
            self.grad += _unbroadcast(g, self.data.shape)
            other.grad += _unbroadcast(g, other.data.shape)

        out._backward = bwd
        return out

    __radd__ = __add__

    def __mul__(self, other):
        other = as_tensor(other)
        out = Tensor(self.data * other.data, (self, other))

        def bwd(g):
            self.grad += _unbroadcast(g * other.data, self.data.shape)
            other.grad += _unbroadcast(g * self.data, other.data.shape)

        out._backward = bwd
        return out

    __rmul__ = __mul__

    def __neg__(self):
        return self * (-1.0)

    def __sub__(self, other):
        return self + (-as_tensor(other))

    def __rsub__(self, other):
        return as_tensor(other) + (-self)

    def __truediv__(self, other):
        other = as_tensor(other)
        out = Tensor(self.data / other.data, (self, other))

        def bwd(g):
            self.grad += _unbroadcast(g / other.data, self.data.shape)
            other.grad += _unbroadcast(-g * self.data / other.data**2, other.data.shape)

        out._backward = bwd
        return out

    def __rtruediv__(self, other):
        return as_tensor(other) / self

    def __pow__(self, exponent):
        assert np.isscalar(exponent), "only constant exponents are supported"
        out = Tensor(self.data**exponent, (self,))

        def bwd(g):
            self.grad += g * exponent * self.data ** (exponent - 1)

        out._backward = bwd
        return out

    def __matmul__(self, other):
        other = as_tensor(other)
        out = Tensor(self.data @ other.data, (self, other))

        def bwd(g):
            self.grad += g @ other.data.T
            other.grad += self.data.T @ g

        out._backward = bwd
        return out

    def __rmatmul__(self, other):
        return as_tensor(other) @ self

    # -- shaping ------------------------------------------------------

    def __getitem__(self, idx):
        out = Tensor(self.data[idx], (self,))

        def bwd(g):
            np.add.at(self.grad, idx, g)

        out._backward = bwd
        return out

    def reshape(self, *shape):
        out = Tensor(self.data.reshape(*shape), (self,))

        def bwd(g):
            self.grad += g.reshape(self.data.shape)

        out._backward = bwd
        return out

    # -- reductions ---------------------------------------------------

    def sum(self, axis=None, keepdims=False):
        out = Tensor(self.data.sum(axis=axis, keepdims=keepdims), (self,))

        def bwd(g):
            if axis is not None and not keepdims:
                g = np.expand_dims(g, axis)
            self.grad += np.broadcast_to(g, self.data.shape)

        out._backward = bwd
        return out

    def mean(self, axis=None, keepdims=False):
        count = self.data.size if axis is None else self.data.shape[axis]
        return self.sum(axis=axis, keepdims=keepdims) / count


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


# -- dispatching elementwise helpers ----------------------------------


def _unary(x, fn, dfn):
    if not isinstance(x, Tensor):
        return fn(np.asarray(x, dtype=np.float64))
    out = Tensor(fn(x.data), (x,))

    def bwd(g):
        x.grad += g * dfn(x.data, out.data)

    out._backward = bwd
    return out


def exp(x):
    return _unary(x, np.exp, lambda _, y: y)


def tanh(x):
    return _unary(x, np.tanh, lambda _, y: 1.0 - y**2)


def sqrt(x):
    return _unary(x, np.sqrt, lambda _, y: 0.5 / y)


def absolute(x):
    return _unary(x, np.abs, lambda d, _: np.sign(d))


def relu(x):
    return _unary(x, lambda d: np.maximum(d, 0.0), lambda d, _: (d > 0).astype(np.float64))


def _binary_select(a, b, pick_a):
    """maximum/minimum; `pick_a(da, db)` is the mask routing the gradient to `a`."""
    if not isinstance(a, Tensor) and not isinstance(b, Tensor):
        return np.where(pick_a(np.asarray(a), np.asarray(b)), a, b) + 0.0
    a, b = as_tensor(a), as_tensor(b)
    mask = pick_a(a.data, b.data)
    out = Tensor(np.where(mask, a.data, b.data), (a, b))

    def bwd(g):
        a.grad += _unbroadcast(g * mask, a.data.shape)
        b.grad += _unbroadcast(g * ~mask, b.data.shape)

    out._backward = bwd
    return out


def maximum(a, b):
    return _binary_select(a, b, lambda da, db: da > db)


def minimum(a, b):
    return _binary_select(a, b, lambda da, db: da < db)


def mean(x, axis=None):
    if isinstance(x, Tensor):
        return x.mean(axis=axis)
    return np.mean(x, axis=axis)


def total(x, axis=None):
    if isinstance(x, Tensor):
        return x.sum(axis=axis)
    return np.sum(x, axis=axis)


def value_of(x) -> np.ndarray:
    """The underlying array, whether or not gradients are being recorded."""
    return x.data if isinstance(x, Tensor) else np.asarray(x, dtype=np.float64)
