"""Reverse-mode automatic differentiation over numpy arrays."""
from __future__ import annotations

import contextlib

import numpy as np

_GRAD_ENABLED = True


@contextlib.contextmanager
def no_grad():
    """Evaluate without recording the computation graph."""
    global _GRAD_ENABLED
    prev, _GRAD_ENABLED = _GRAD_ENABLED, False
    try:
        yield
    finally:
        _GRAD_ENABLED = prev


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward", "op")

    def __init__(self, data, requires_grad: bool = False, _parents=(), op: str = ""):
        self.data = np.asarray(data, dtype=float)
        self.grad: np.ndarray | None = None
        self.requires_grad = requires_grad
        self._parents = _parents
        self._backward = None
        self.op = op

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, op={self.op or 'leaf'})"

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data)

    def detach(self) -> Tensor:
        return Tensor(self.data)

    def _make(self, data, parents, backward, op) -> Tensor:
        parents = tuple(p for p in parents if p.requires_grad)
        if not (_GRAD_ENABLED and parents):
            return Tensor(data)
        out = Tensor(data, True, parents, op)
        out._backward = backward
        return out

    def _accum(self, g: np.ndarray) -> None:
        if not self.requires_grad:
            return
        g = _unbroadcast(g, self.shape)
        self.grad = g if self.grad is None else self.grad + g

    def backward(self) -> None:
        if self.data.size != 1:
            raise ValueError("backward() needs a scalar root")
        order: list[Tensor] = []
        seen: set[int] = set()
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
            stack.extend((p, False) for p in node._parents if id(p) not in seen)
        self.grad = np.ones_like(self.data)
        for node in reversed(order):
            if node._backward is not None and node.grad is not None:
                node._backward(node.grad)

    # arithmetic ---------------------------------------------------------------

    def __add__(self, other) -> Tensor:
        other = as_tensor(other)

        def back(g):
            self._accum(g)
            other._accum(g)

        return self._make(self.data + other.data, (self, other), back, "add")

    __radd__ = __add__

    def __neg__(self) -> Tensor:
        return self._make(-self.data, (self,), lambda g: self._accum(-g), "neg")

    def __sub__(self, other) -> Tensor:
        return self + (-as_tensor(other))

    def __rsub__(self, other) -> Tensor:
        return as_tensor(other) + (-self)

    def __mul__(self, other) -> Tensor:
        other = as_tensor(other)

        def back(g):
            self._accum(g * other.data)
            other._accum(g * self.data)

        return self._make(self.data * other.data, (self, other), back, "mul")

    __rmul__ = __mul__

    def __truediv__(self, other) -> Tensor:
        other = as_tensor(other)

        def back(g):
            self._accum(g / other.data)
            other._accum(-g * self.data / other.data**2)

        return self._make(self.data / other.data, (self, other), back, "div")

    def __rtruediv__(self, other) -> Tensor:
        return as_tensor(other) / self

    def __pow__(self, p: float) -> Tensor:
        def back(g):
            self._accum(g * p * self.data ** (p - 1))

        return self._make(self.data**p, (self,), back, "pow")

    def __matmul__(self, other) -> Tensor:
        other = as_tensor(other)
        a, b = self.data, other.data

        def back(g):
            if self.requires_grad:
                ga = g @ np.swapaxes(b, -1, -2) if b.ndim > 1 else np.multiply.outer(g, b)
                self._accum(ga)
            if other.requires_grad:
                if a.ndim == 1:
                    gb = np.multiply.outer(a, g)
                else:
                    gb = np.swapaxes(a, -1, -2) @ g
                other._accum(gb)

        return self._make(a @ b, (self, other), back, "matmul")

    # reductions and shape -------------------------------------------------------

    def sum(self, axis=None, keepdims: bool = False) -> Tensor:
        def back(g):
            if axis is not None and not keepdims:
                g = np.expand_dims(g, axis)
            self._accum(np.broadcast_to(g, self.shape))

        return self._make(self.data.sum(axis=axis, keepdims=keepdims), (self,), back, "sum")

    def mean(self, axis=None, keepdims: bool = False) -> Tensor:
        count = self.data.size if axis is None else np.prod([self.shape[a] for a in np.atleast_1d(axis)])
        return self.sum(axis=axis, keepdims=keepdims) * (1.0 / count)

    def reshape(self, *shape) -> Tensor:
        return self._make(self.data.reshape(*shape), (self,), lambda g: self._accum(g.reshape(self.shape)), "reshape")

    def swapaxes(self, a: int, b: int) -> Tensor:
        return self._make(np.swapaxes(self.data, a, b), (self,), lambda g: self._accum(np.swapaxes(g, a, b)), "swapaxes")

    @property
    def T(self) -> Tensor:
        return self.swapaxes(-1, -2)

    def __getitem__(self, idx) -> Tensor:
        def back(g):
            full = np.zeros_like(self.data)
            np.add.at(full, idx, g)
            self._accum(full)

        return self._make(self.data[idx], (self,), back, "getitem")

    # elementwise ----------------------------------------------------------------

    def exp(self) -> Tensor:
        out = np.exp(self.data)
        return self._make(out, (self,), lambda g: self._accum(g * out), "exp")

    def log(self) -> Tensor:
        return self._make(np.log(self.data), (self,), lambda g: self._accum(g / self.data), "log")

    def relu(self) -> Tensor:
        mask = self.data > 0
        return self._make(self.data * mask, (self,), lambda g: self._accum(g * mask), "relu")

    def sigmoid(self) -> Tensor:
        out = _sigmoid(self.data)
        return self._make(out, (self,), lambda g: self._accum(g * out * (1 - out)), "sigmoid")

    def log_sigmoid(self) -> Tensor:
        """``log(sigmoid(x))`` without overflow."""
        x = self.data
        out = -np.logaddexp(0.0, -x)
        return self._make(out, (self,), lambda g: self._accum(g * _sigmoid(-x)), "log_sigmoid")

    def clip(self, lo: float, hi: float) -> Tensor:
        mask = (self.data >= lo) & (self.data <= hi)
        return self._make(np.clip(self.data, lo, hi), (self,), lambda g: self._accum(g * mask), "clip")

    def softmax(self, axis: int = -1) -> Tensor:
        out = _softmax(self.data, axis)

        def back(g):
            self._accum(out * (g - (g * out).sum(axis=axis, keepdims=True)))

        return self._make(out, (self,), back, "softmax")

    def log_softmax(self, axis: int = -1) -> Tensor:
        shifted = self.data - self.data.max(axis=axis, keepdims=True)
        out = shifted - np.log(np.exp(shifted).sum(axis=axis, keepdims=True))

        def back(g):
            self._accum(g - np.exp(out) * g.sum(axis=axis, keepdims=True))

        return self._make(out, (self,), back, "log_softmax")


def _sigmoid(x: np.ndarray) -> np.ndarray:
    # split by sign to avoid overflow in exp
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def _softmax(x: np.ndarray, axis: int) -> np.ndarray:
    e = np.exp(x - x.max(axis=axis, keepdims=True))
    return e / e.sum(axis=axis, keepdims=True)


def parameter(data) -> Tensor:
    return Tensor(np.array(data, dtype=float), requires_grad=True)
