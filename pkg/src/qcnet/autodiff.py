"""Reverse-mode automatic differentiation on float64 numpy arrays.

A Tensor wraps an ndarray and records the op that produced it; ``backward()``
walks the tape in reverse topological order and accumulates gradients into
every tensor with ``requires_grad``.  The op set is exactly what the
simplex-attention model needs: broadcasting arithmetic, matmul, concat,
row gather / segment sum (the scatter pair used for message aggregation),
reductions, and the activations.  All accumulation happens in a fixed order
determined by tape construction, so given identical inputs the gradients are
bit-for-bit reproducible.

Normalization layers are built from these primitives elsewhere, which makes
gradients flow through the batch statistics without any special casing.
"""

from __future__ import annotations

import numpy as np


def sigmoid_np(x: np.ndarray) -> np.ndarray:
    """Numerically stable logistic function."""
    x = np.asarray(x, dtype=np.float64)
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def silu_np(x: np.ndarray) -> np.ndarray:
    return x * sigmoid_np(x)


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum grad over axes that were added or stretched by broadcasting."""
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


class Tensor:
    """Node of the tape: value, optional gradient, and a pullback."""

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_pullback")

    def __init__(self, data, requires_grad: bool = False,
                 parents: tuple = (), pullback=None):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad: np.ndarray | None = None
        self.requires_grad = bool(requires_grad)
        self._parents = parents
        self._pullback = pullback

    @property
    def shape(self):
        return self.data.shape

    def item(self) -> float:
        return float(self.data)

    def _accumulate(self, grad: np.ndarray) -> None:
        if self.grad is None:
            self.grad = np.zeros_like(self.data)
        self.grad += grad

    def zero_grad(self) -> None:
        self.grad = None

    def backward(self) -> None:
        """Accumulate d(self)/d(leaf) into every reachable grad-enabled leaf."""
        topo: list[Tensor] = []
        seen: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(self, False)]
        while stack:
            node, done = stack.pop()
            if done:
                topo.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for parent in node._parents:
                if id(parent) not in seen:
                    stack.append((parent, False))
        self._accumulate(np.ones_like(self.data))
        for node in reversed(topo):
            if node._pullback is not None and node.grad is not None:
                node._pullback(node.grad)

    # -- arithmetic ---------------------------------------------------------

    def __add__(self, other):
        other = _ensure(other)
        out = Tensor(self.data + other.data,
                     self.requires_grad or other.requires_grad,
                     (self, other))

        def pullback(g):
            if self.requires_grad:
                self._accumulate(_unbroadcast(g, self.data.shape))
            if other.requires_grad:
                other._accumulate(_unbroadcast(g, other.data.shape))
        out._pullback = pullback
        return out

    __radd__ = __add__

    def __neg__(self):
        out = Tensor(-self.data, self.requires_grad, (self,))

        def pullback(g):
            if self.requires_grad:
                self._accumulate(-g)
        out._pullback = pullback
        return out

    def __sub__(self, other):
        return self + (-_ensure(other))

    def __rsub__(self, other):
        return _ensure(other) + (-self)

    def __mul__(self, other):
        other = _ensure(other)
        out = Tensor(self.data * other.data,
                     self.requires_grad or other.requires_grad,
                     (self, other))

        def pullback(g):
            if self.requires_grad:
                self._accumulate(_unbroadcast(g * other.data, self.data.shape))
            if other.requires_grad:
                other._accumulate(_unbroadcast(g * self.data,
                                               other.data.shape))
        out._pullback = pullback
        return out

    __rmul__ = __mul__

    def __truediv__(self, other):
        other = _ensure(other)
        out = Tensor(self.data / other.data,
                     self.requires_grad or other.requires_grad,
                     (self, other))

        def pullback(g):
            if self.requires_grad:
                self._accumulate(_unbroadcast(g / other.data, self.data.shape))
            if other.requires_grad:
                other._accumulate(_unbroadcast(
                    -g * self.data / (other.data * other.data),
                    other.data.shape))
        out._pullback = pullback
        return out

    def __rtruediv__(self, other):
        return _ensure(other) / self

    def __matmul__(self, other):
        other = _ensure(other)
        out = Tensor(self.data @ other.data,
                     self.requires_grad or other.requires_grad,
                     (self, other))

        def pullback(g):
            if self.requires_grad:
                self._accumulate(g @ other.data.T)
            if other.requires_grad:
                other._accumulate(self.data.T @ g)
        out._pullback = pullback
        return out

    # -- elementwise functions ---------------------------------------------

    def square(self):
        return self * self

    def sqrt(self):
        value = np.sqrt(self.data)
        out = Tensor(value, self.requires_grad, (self,))

        def pullback(g):
            if self.requires_grad:
                self._accumulate(g * 0.5 / value)
        out._pullback = pullback
        return out

    def abs(self):
        out = Tensor(np.abs(self.data), self.requires_grad, (self,))

        def pullback(g):
            if self.requires_grad:
                self._accumulate(g * np.sign(self.data))
        out._pullback = pullback
        return out

    def sigmoid(self):
        value = sigmoid_np(self.data)
        out = Tensor(value, self.requires_grad, (self,))

        def pullback(g):
            if self.requires_grad:
                self._accumulate(g * value * (1.0 - value))
        out._pullback = pullback
        return out

    def silu(self):
        sig = sigmoid_np(self.data)
        out = Tensor(self.data * sig, self.requires_grad, (self,))

        def pullback(g):
            if self.requires_grad:
                self._accumulate(g * sig * (1.0 + self.data * (1.0 - sig)))
        out._pullback = pullback
        return out

    # -- reductions ---------------------------------------------------------

    def sum(self, axis: int | None = None, keepdims: bool = False):
        out = Tensor(self.data.sum(axis=axis, keepdims=keepdims),
                     self.requires_grad, (self,))

        def pullback(g):
            if not self.requires_grad:
                return
            if axis is None:
                self._accumulate(np.broadcast_to(g, self.data.shape).copy())
            else:
                expand = g if keepdims else np.expand_dims(g, axis)
                self._accumulate(np.broadcast_to(expand,
                                                 self.data.shape).copy())
        out._pullback = pullback
        return out

    def mean(self, axis: int | None = None, keepdims: bool = False):
        count = (self.data.size if axis is None else self.data.shape[axis])
        return self.sum(axis=axis, keepdims=keepdims) * (1.0 / count)


def _ensure(value) -> Tensor:
    if isinstance(value, Tensor):
        return value
    return Tensor(np.asarray(value, dtype=np.float64))


def constant(value) -> Tensor:
    """Wrap an array as a non-differentiable tape leaf."""
    return _ensure(value)


def parameter(value) -> Tensor:
    """Wrap an array as a differentiable leaf (owns its storage)."""
    return Tensor(np.array(value, dtype=np.float64), requires_grad=True)


def concat(tensors: list[Tensor], axis: int = 1) -> Tensor:
    tensors = [_ensure(t) for t in tensors]
    out = Tensor(np.concatenate([t.data for t in tensors], axis=axis),
                 any(t.requires_grad for t in tensors), tuple(tensors))
    sizes = [t.data.shape[axis] for t in tensors]
    splits = np.cumsum(sizes)[:-1]

    def pullback(g):
        for t, piece in zip(tensors, np.split(g, splits, axis=axis)):
            if t.requires_grad:
                t._accumulate(piece)
    out._pullback = pullback
    return out


def gather_rows(t: Tensor, index: np.ndarray) -> Tensor:
    """Select rows; the pullback scatter-adds back into the source rows."""
    index = np.asarray(index, dtype=np.int64)
    out = Tensor(t.data[index], t.requires_grad, (t,))

    def pullback(g):
        if t.requires_grad:
            acc = np.zeros_like(t.data)
            np.add.at(acc, index, g)
            t._accumulate(acc)
    out._pullback = pullback
    return out


def segment_sum(t: Tensor, segment: np.ndarray, n_segments: int) -> Tensor:
    """Sum rows into n_segments buckets; pullback is a row gather."""
    segment = np.asarray(segment, dtype=np.int64)
    value = np.zeros((n_segments,) + t.data.shape[1:], dtype=np.float64)
    np.add.at(value, segment, t.data)
    out = Tensor(value, t.requires_grad, (t,))

    def pullback(g):
        if t.requires_grad:
            t._accumulate(g[segment])
    out._pullback = pullback
    return out


def segment_mean(t: Tensor, segment: np.ndarray, n_segments: int) -> Tensor:
    """Per-bucket mean of rows; every bucket must be nonempty."""
    segment = np.asarray(segment, dtype=np.int64)
    counts = np.bincount(segment, minlength=n_segments).astype(np.float64)
    if np.any(counts == 0):
        raise ValueError("segment_mean: empty segment")
    return segment_sum(t, segment, n_segments) * (1.0 / counts[:, None])
