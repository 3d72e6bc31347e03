"""Reverse-mode autodiff over float64 numpy arrays."""

from __future__ import annotations

from typing import Callable, Iterable, Sequence

import numpy as np

from ..errors import ShapeError


class Tensor:
    """A float64 array with an optional gradient slot.

    Non-leaf tensors remember their parents and a closure that pushes
    ``self.grad`` back into them.
    """

    __slots__ = ("data", "grad", "requires_grad", "name", "_parents", "_backward", "_op")

    def __init__(self, data, requires_grad: bool = False, name: str | None = None):
        self.data = np.array(data, dtype=np.float64)
        self.grad: np.ndarray | None = None
        self.requires_grad = requires_grad
        self.name = name
        self._parents: tuple[Tensor, ...] = ()
        self._backward: Callable[[], None] | None = None
        self._op = "leaf"

    # -- construction helpers

    @classmethod
    def _result(cls, data: np.ndarray, parents: Sequence["Tensor"], op: str) -> "Tensor":
        out = cls.__new__(cls)
        out.data = data
        out.grad = None
        out.name = None
        out.requires_grad = any(p.requires_grad for p in parents)
        out._parents = tuple(parents) if out.requires_grad else ()
        out._backward = None
        out._op = op
        return out

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
        return float(self.data)

    def numpy(self) -> np.ndarray:
        return self.data

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def zero_grad(self) -> None:
        self.grad = None

    def __repr__(self):
        tag = f" name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.shape}, op={self._op}{tag}, requires_grad={self.requires_grad})"

    def _accumulate(self, g: np.ndarray) -> None:
        if not self.requires_grad:
            return
        if self.grad is None:
            self.grad = np.array(g, dtype=np.float64, copy=True)
        else:
            self.grad += g

    def backward(self, grad=None) -> None:
        """Accumulate d(self)/d(leaf) into every reachable leaf's ``grad``."""
        if grad is None:
            if self.data.size != 1:
                raise ShapeError("backward() without a seed needs a scalar output")
            grad = np.ones_like(self.data)
        order = topological_order(self)
        for node in order:
            if node._backward is not None:
                node.grad = None
        self.grad = np.array(grad, dtype=np.float64).reshape(self.shape)
        for node in reversed(order):
            if node._backward is not None and node.grad is not None:
                node._backward()

    # -- operators

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

    def __neg__(self):
        return mul(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, idx):
        return getitem(self, idx)

    def sum(self, axis=None):
        return tsum(self, axis)

    def mean(self, axis=None):
        return mean(self, axis)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def topological_order(root: Tensor) -> list[Tensor]:
    """Nodes reachable from ``root``, parents before children."""
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
        for p in node._parents:
            if id(p) not in seen:
                stack.append((p, False))
    return order


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for i, n in enumerate(shape):
        if n == 1 and g.shape[i] != 1:
            g = g.sum(axis=i, keepdims=True)
    return g


# ------------------------------------------------------------ elementwise


def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    out = Tensor._result(a.data + b.data, (a, b), "add")
    if out.requires_grad:
        def backward():
            a._accumulate(_unbroadcast(out.grad, a.shape))
            b._accumulate(_unbroadcast(out.grad, b.shape))
        out._backward = backward
    return out


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    out = Tensor._result(a.data - b.data, (a, b), "sub")
    if out.requires_grad:
        def backward():
            a._accumulate(_unbroadcast(out.grad, a.shape))
            b._accumulate(_unbroadcast(-out.grad, b.shape))
        out._backward = backward
    return out


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    out = Tensor._result(a.data * b.data, (a, b), "mul")
    if out.requires_grad:
        def backward():
            a._accumulate(_unbroadcast(out.grad * b.data, a.shape))
            b._accumulate(_unbroadcast(out.grad * a.data, b.shape))
        out._backward = backward
    return out


def square(a: Tensor) -> Tensor:
    out = Tensor._result(a.data * a.data, (a,), "square")
    if out.requires_grad:
        out._backward = lambda: a._accumulate(2.0 * a.data * out.grad)
    return out


def sigmoid_np(z: np.ndarray) -> np.ndarray:
    # split by sign so exp never overflows
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def sigmoid(a: Tensor) -> Tensor:
    s = sigmoid_np(a.data)
    out = Tensor._result(s, (a,), "sigmoid")
    if out.requires_grad:
        out._backward = lambda: a._accumulate(out.grad * s * (1.0 - s))
    return out


def tanh(a: Tensor) -> Tensor:
    t = np.tanh(a.data)
    out = Tensor._result(t, (a,), "tanh")
    if out.requires_grad:
        out._backward = lambda: a._accumulate(out.grad * (1.0 - t * t))
    return out


# Pre-activations seen by relu while a grad_check trace is open.
_relu_trace: list[np.ndarray] | None = None


def relu(a: Tensor) -> Tensor:
    if _relu_trace is not None:
        _relu_trace.append(a.data.copy())
    mask = a.data > 0
    out = Tensor._result(np.where(mask, a.data, 0.0), (a,), "relu")
    if out.requires_grad:
        out._backward = lambda: a._accumulate(out.grad * mask)
    return out


# ------------------------------------------------------------ structural


def matmul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if a.shape[-1] != b.shape[0] or b.ndim != 2:
        raise ShapeError(f"matmul shape mismatch {a.shape} @ {b.shape}")
    out = Tensor._result(a.data @ b.data, (a, b), "matmul")
    if out.requires_grad:
        def backward():
            g = out.grad
            a._accumulate(g @ b.data.T)
            if b.requires_grad:
                a2 = a.data.reshape(-1, a.shape[-1])
                b._accumulate(a2.T @ g.reshape(-1, g.shape[-1]))
        out._backward = backward
    return out


def tsum(a: Tensor, axis=None) -> Tensor:
    out = Tensor._result(np.asarray(a.data.sum(axis=axis)), (a,), "sum")
    if out.requires_grad:
        def backward():
            g = out.grad if axis is None else np.expand_dims(out.grad, axis)
            a._accumulate(np.broadcast_to(g, a.shape))
        out._backward = backward
    return out


def mean(a: Tensor, axis=None) -> Tensor:
    n = a.size if axis is None else a.shape[axis]
    return mul(tsum(a, axis), 1.0 / n)


def reshape(a: Tensor, shape) -> Tensor:
    out = Tensor._result(a.data.reshape(shape), (a,), "reshape")
    if out.requires_grad:
        out._backward = lambda: a._accumulate(out.grad.reshape(a.shape))
    return out


def getitem(a: Tensor, idx) -> Tensor:
    out = Tensor._result(np.array(a.data[idx]), (a,), "getitem")
    if out.requires_grad:
        def backward():
            g = np.zeros_like(a.data)
            np.add.at(g, idx, out.grad)
            a._accumulate(g)
        out._backward = backward
    return out


def concat(tensors: Iterable[Tensor], axis: int = -1) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    data = np.concatenate([t.data for t in tensors], axis=axis)
    out = Tensor._result(data, tensors, "concat")
    if out.requires_grad:
        sizes = np.cumsum([t.shape[axis] for t in tensors])[:-1]
        def backward():
            for t, g in zip(tensors, np.split(out.grad, sizes, axis=axis)):
                t._accumulate(g)
        out._backward = backward
    return out
