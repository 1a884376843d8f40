"""Minimal reverse-mode automatic differentiation over numpy arrays.

Tensors record the operations that produced them; calling ``backward()`` on a
scalar result walks the recorded graph in reverse topological order and
accumulates gradients into every tensor that requires them. Only the
operations needed by the embedding network are provided.
"""

from __future__ import annotations

import contextlib
from typing import Iterable, Sequence

import numpy as np

__all__ = [
    "Tensor",
    "GraphError",
    "no_grad",
    "gradients",
    "conv2d",
    "signed_sqrt",
    "l2_normalize",
    "take_rows",
    "relu",
]


class GraphError(ValueError):
    """Gradient requested for a value that is not on the recorded graph."""


_grad_enabled = True


@contextlib.contextmanager
def no_grad():
    """Disable graph recording (inference mode)."""
    global _grad_enabled
    prev = _grad_enabled
    _grad_enabled = False
    try:
        yield
    finally:
        _grad_enabled = prev


def _unbroadcast(grad: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum `grad` down to `shape`, undoing numpy broadcasting."""
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, dim in enumerate(shape):
        if dim == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


class Tensor:
    """A numpy array plus the backward closure that produced it."""

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward")

    def __init__(self, data, requires_grad: bool = False):
        self.data = np.asarray(data)
        self.grad = None
        self.requires_grad = bool(requires_grad)
        self._parents: tuple = ()
        self._backward = None

    @staticmethod
    def _result(data: np.ndarray, parents: Sequence["Tensor"], backward) -> "Tensor":
        out = Tensor(data)
        if _grad_enabled and any(p.requires_grad for p in parents):
            out.requires_grad = True
            out._parents = tuple(parents)
            out._backward = backward
        return out

    def _accum(self, grad: np.ndarray) -> None:
        if self.grad is None:
            self.grad = np.zeros_like(self.data)
        self.grad += grad

    # -- graph walking -------------------------------------------------

    def _toposort(self) -> list["Tensor"]:
        order: list[Tensor] = []
        seen: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                order.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                if id(p) not in seen:
                    stack.append((p, False))
        return order

    def backward(self) -> None:
        """Accumulate gradients of this scalar into every ancestor."""
        if self.data.size != 1:
            raise ValueError("backward() requires a scalar tensor")
        order = self._toposort()
        self._accum(np.ones_like(self.data))
        for node in reversed(order):
            if node._backward is not None and node.grad is not None:
                node._backward(node.grad)

    def zero_grad(self) -> None:
        self.grad = None

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    # -- arithmetic ----------------------------------------------------

    @staticmethod
    def _coerce(other) -> "Tensor":
        return other if isinstance(other, Tensor) else Tensor(np.asarray(other))

    def __add__(self, other):
        other = self._coerce(other)
        a, b = self, other

        def bw(g):
            if a.requires_grad:
                a._accum(_unbroadcast(g, a.data.shape))
            if b.requires_grad:
                b._accum(_unbroadcast(g, b.data.shape))

        return self._result(a.data + b.data, (a, b), bw)

    __radd__ = __add__

    def __neg__(self):
        a = self

        def bw(g):
            if a.requires_grad:
                a._accum(-g)

        return self._result(-a.data, (a,), bw)

    def __sub__(self, other):
        return self + (-self._coerce(other))

    def __rsub__(self, other):
        return self._coerce(other) + (-self)

    def __mul__(self, other):
        other = self._coerce(other)
        a, b = self, other

        def bw(g):
            if a.requires_grad:
                a._accum(_unbroadcast(g * b.data, a.data.shape))
            if b.requires_grad:
                b._accum(_unbroadcast(g * a.data, b.data.shape))

        return self._result(a.data * b.data, (a, b), bw)

    __rmul__ = __mul__

    def __truediv__(self, other):
        other = self._coerce(other)
        a, b = self, other

        def bw(g):
            if a.requires_grad:
                a._accum(_unbroadcast(g / b.data, a.data.shape))
            if b.requires_grad:
                b._accum(_unbroadcast(-g * a.data / (b.data * b.data), b.data.shape))

        return self._result(a.data / b.data, (a, b), bw)

    def __pow__(self, exponent):
        if not isinstance(exponent, (int, float)):
            raise TypeError("only scalar exponents are supported")
        a = self

        def bw(g):
            if a.requires_grad:
                a._accum(g * exponent * a.data ** (exponent - 1))

        return self._result(a.data**exponent, (a,), bw)

    def __matmul__(self, other):
        other = self._coerce(other)
        a, b = self, other
        if a.data.ndim != 2 or b.data.ndim != 2:
            raise ValueError("matmul expects 2-D operands")

        def bw(g):
            if a.requires_grad:
                a._accum(g @ b.data.T)
            if b.requires_grad:
                b._accum(a.data.T @ g)

        return self._result(a.data @ b.data, (a, b), bw)

    # -- reductions and shape ------------------------------------------

    def sum(self, axis=None, keepdims: bool = False):
        a = self

        def bw(g):
            if not a.requires_grad:
                return
            if axis is None:
                a._accum(np.broadcast_to(g, a.data.shape).copy())
                return
            gk = g
            if not keepdims:
                gk = np.expand_dims(g, axis)
            a._accum(np.broadcast_to(gk, a.data.shape).copy())

        return self._result(a.data.sum(axis=axis, keepdims=keepdims), (a,), bw)

    def mean(self, axis=None, keepdims: bool = False):
        count = self.data.size if axis is None else np.prod(
            [self.data.shape[ax] for ax in (axis if isinstance(axis, tuple) else (axis,))]
        )
        return self.sum(axis=axis, keepdims=keepdims) * (1.0 / float(count))

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        a = self
        old = a.data.shape

        def bw(g):
            if a.requires_grad:
                a._accum(g.reshape(old))

        return self._result(a.data.reshape(shape), (a,), bw)

    def transpose(self, axes: Sequence[int]):
        a = self
        inverse = np.argsort(axes)

        def bw(g):
            if a.requires_grad:
                a._accum(g.transpose(inverse))

        return self._result(a.data.transpose(axes), (a,), bw)

    # -- elementwise nonlinearities ------------------------------------

    def exp(self):
        a = self
        out_data = np.exp(a.data)

        def bw(g):
            if a.requires_grad:
                a._accum(g * out_data)

        return self._result(out_data, (a,), bw)

    def sqrt(self):
        a = self
        out_data = np.sqrt(a.data)

        def bw(g):
            if a.requires_grad:
                a._accum(g * 0.5 / out_data)

        return self._result(out_data, (a,), bw)

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, requires_grad={self.requires_grad})"


def relu(t: Tensor) -> Tensor:
    mask = t.data > 0

    def bw(g):
        if t.requires_grad:
            t._accum(g * mask)

    return Tensor._result(np.where(mask, t.data, 0.0), (t,), bw)


def signed_sqrt(t: Tensor) -> Tensor:
    """sign(x) * sqrt(|x|); derivative defined as 0 at x == 0."""
    absd = np.abs(t.data)
    out_data = np.sign(t.data) * np.sqrt(absd)

    def bw(g):
        if t.requires_grad:
            d = np.zeros_like(t.data)
            nz = absd > 0
            d[nz] = 0.5 / np.sqrt(absd[nz])
            t._accum(g * d)

    return Tensor._result(out_data, (t,), bw)


def l2_normalize(t: Tensor, axis: int = -1) -> Tensor:
    """x / ||x||_2 along `axis`; an all-zero slice stays zero."""
    norm = np.sqrt((t.data * t.data).sum(axis=axis, keepdims=True))
    safe = np.where(norm > 0, norm, 1.0)
    out_data = t.data / safe

    def bw(g):
        if not t.requires_grad:
            return
        dot = (out_data * g).sum(axis=axis, keepdims=True)
        grad = (g - out_data * dot) / safe
        t._accum(np.where(norm > 0, grad, 0.0))

    return Tensor._result(out_data, (t,), bw)


def take_rows(t: Tensor, indices) -> Tensor:
    """Select rows of a 2-D tensor; backward scatter-adds into the source."""
    idx = np.asarray(indices, dtype=np.intp)

    def bw(g):
        if t.requires_grad:
            acc = np.zeros_like(t.data)
            np.add.at(acc, idx, g)
            t._accum(acc)

    return Tensor._result(t.data[idx], (t,), bw)


def _im2col(x: np.ndarray, kh: int, kw: int, stride: int, pad: int):
    b, c, h, w = x.shape
    hp = (h + 2 * pad - kh) // stride + 1
    wp = (w + 2 * pad - kw) // stride + 1
    xp = np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad)))
    win = np.lib.stride_tricks.sliding_window_view(xp, (kh, kw), axis=(2, 3))
    win = win[:, :, ::stride, ::stride, :, :]
    cols = win.transpose(0, 2, 3, 1, 4, 5).reshape(b * hp * wp, c * kh * kw)
    return np.ascontiguousarray(cols), hp, wp


def conv2d(x: Tensor, weight: Tensor, bias: Tensor, stride: int = 1, pad: int = 1) -> Tensor:
    """2-D convolution, NCHW layout, square kernel given by weight shape."""
    f, c, kh, kw = weight.data.shape
    b = x.data.shape[0]
    cols, hp, wp = _im2col(x.data, kh, kw, stride, pad)
    wmat = weight.data.reshape(f, c * kh * kw)
    out = cols @ wmat.T + bias.data
    out_data = out.reshape(b, hp, wp, f).transpose(0, 3, 1, 2)

    def bw(g):
        gmat = g.transpose(0, 2, 3, 1).reshape(b * hp * wp, f)
        if bias.requires_grad:
            bias._accum(gmat.sum(axis=0))
        if weight.requires_grad:
            weight._accum((gmat.T @ cols).reshape(f, c, kh, kw))
        if x.requires_grad:
            dcols = gmat @ wmat
            dcols = dcols.reshape(b, hp, wp, c, kh, kw).transpose(0, 3, 1, 2, 4, 5)
            h, w = x.data.shape[2], x.data.shape[3]
            gxp = np.zeros((b, c, h + 2 * pad, w + 2 * pad), dtype=x.data.dtype)
            for i in range(kh):
                for j in range(kw):
                    gxp[:, :, i : i + stride * hp : stride, j : j + stride * wp : stride] += dcols[
                        :, :, :, :, i, j
                    ]
            x._accum(gxp[:, :, pad : pad + h, pad : pad + w] if pad else gxp)

    return Tensor._result(out_data, (x, weight, bias), bw)


def gradients(loss: Tensor, wrt: Iterable[Tensor]) -> list[np.ndarray]:
    """Gradients of a scalar loss for each tensor in `wrt`.

    Raises GraphError if a requested tensor was never part of the graph
    that produced the loss.
    """
    order = loss._toposort()
    on_graph = {id(node) for node in order}
    for node in order:
        node.grad = None
    loss.backward()
    out = []
    for t in wrt:
        if id(t) not in on_graph:
            raise GraphError("tensor is not on the recorded graph of this loss")
        out.append(t.grad if t.grad is not None else np.zeros_like(t.data))
    return out
