"""Minimal reverse-mode automatic differentiation over numpy arrays.

Only the operations the attention network needs are provided. Every op
returns a new :class:`Tensor` that remembers its parents and a closure
pushing the output gradient back to them.
"""

from __future__ import annotations

from typing import Callable, Sequence

import numpy as np
import scipy.sparse as sp


def _unbroadcast(grad: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum ``grad`` down to ``shape`` after numpy broadcasting."""
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward", "name")

    def __init__(
        self,
        data,
        requires_grad: bool = False,
        parents: Sequence["Tensor"] = (),
        backward: Callable[[np.ndarray], None] | None = None,
        name: str | None = None,
    ):
        self.data = np.asarray(data, dtype=float)
        self.grad: np.ndarray | None = None
        self.requires_grad = requires_grad or any(p.requires_grad for p in parents)
        self._parents = tuple(parents)
        self._backward = backward
        self.name = name

    # ---------------------------------------------------------------- basics
    @property
    def shape(self) -> tuple:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    def __repr__(self) -> str:
        label = f" {self.name}" if self.name else ""
        return f"Tensor{label}(shape={self.shape}, requires_grad={self.requires_grad})"

    def _accumulate(self, g: np.ndarray) -> None:
        if not self.requires_grad:
            return
        g = _unbroadcast(g, self.data.shape)
        if self.grad is None:
            self.grad = np.array(g, dtype=float, copy=True)
        else:
            self.grad += g

    def zero_grad(self) -> None:
        self.grad = None

    def backward(self, grad: np.ndarray | None = None) -> None:
        """Backpropagate from this tensor through the recorded graph."""
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
                if id(p) not in seen and p.requires_grad:
                    stack.append((p, False))
        self._accumulate(np.ones_like(self.data) if grad is None else np.asarray(grad, float))
        for node in reversed(order):
            if node._backward is not None and node.grad is not None:
                node._backward(node.grad)

    # ------------------------------------------------------------ arithmetic
    def __add__(self, other):
        other = as_tensor(other)

        def back(g):
            self._accumulate(g)
            other._accumulate(g)

        return Tensor(self.data + other.data, parents=(self, other), backward=back)

    __radd__ = __add__

    def __neg__(self):
        return Tensor(-self.data, parents=(self,), backward=lambda g: self._accumulate(-g))

    def __sub__(self, other):
        return self + (-as_tensor(other))

    def __rsub__(self, other):
        return as_tensor(other) + (-self)

    def __mul__(self, other):
        other = as_tensor(other)

        def back(g):
            self._accumulate(g * other.data)
            other._accumulate(g * self.data)

        return Tensor(self.data * other.data, parents=(self, other), backward=back)

    __rmul__ = __mul__

    def __truediv__(self, other):
        other = as_tensor(other)
        out = self.data / other.data

        def back(g):
            self._accumulate(g / other.data)
            other._accumulate(-g * out / other.data)

        return Tensor(out, parents=(self, other), backward=back)

    def __matmul__(self, other):
        other = as_tensor(other)

        def back(g):
            if self.requires_grad:
                self._accumulate(g @ np.swapaxes(other.data, -1, -2))
            if other.requires_grad:
                other._accumulate(np.swapaxes(self.data, -1, -2) @ g)

        return Tensor(self.data @ other.data, parents=(self, other), backward=back)

    def __getitem__(self, idx):
        def back(g):
            full = np.zeros_like(self.data)
            np.add.at(full, idx, g)
            self._accumulate(full)

        return Tensor(self.data[idx], parents=(self,), backward=back)

    # ------------------------------------------------------------ reductions
    def sum(self, axis=None, keepdims: bool = False):
        def back(g):
            if axis is not None and not keepdims:
                g = np.expand_dims(g, axis)
            self._accumulate(np.broadcast_to(g, self.data.shape))

        return Tensor(self.data.sum(axis=axis, keepdims=keepdims), parents=(self,), backward=back)

    def mean(self, axis=None, keepdims: bool = False):
        n = self.data.size if axis is None else self.data.shape[axis]
        return self.sum(axis=axis, keepdims=keepdims) * (1.0 / n)

    # ------------------------------------------------------------ elementwise
    def exp(self):
        out = np.exp(self.data)
        return Tensor(out, parents=(self,), backward=lambda g: self._accumulate(g * out))

    def log(self):
        return Tensor(np.log(self.data), parents=(self,), backward=lambda g: self._accumulate(g / self.data))

    def sin(self):
        return Tensor(np.sin(self.data), parents=(self,), backward=lambda g: self._accumulate(g * np.cos(self.data)))

    def leaky_relu(self, slope: float = 0.2):
        mask = self.data > 0
        out = np.where(mask, self.data, slope * self.data)
        return Tensor(out, parents=(self,), backward=lambda g: self._accumulate(g * np.where(mask, 1.0, slope)))

    def elu(self, alpha: float = 1.0):
        mask = self.data > 0
        neg = alpha * np.expm1(np.minimum(self.data, 0))
        out = np.where(mask, self.data, neg)
        return Tensor(out, parents=(self,), backward=lambda g: self._accumulate(g * np.where(mask, 1.0, neg + alpha)))

    # ---------------------------------------------------------------- shape
    def reshape(self, *shape):
        return Tensor(
            self.data.reshape(*shape),
            parents=(self,),
            backward=lambda g: self._accumulate(g.reshape(self.data.shape)),
        )

    def transpose(self, *axes):
        axes = axes or tuple(reversed(range(self.ndim)))
        inv = np.argsort(axes)
        return Tensor(
            self.data.transpose(axes),
            parents=(self,),
            backward=lambda g: self._accumulate(g.transpose(inv)),
        )


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def parameter(data, name: str | None = None) -> Tensor:
    return Tensor(np.array(data, dtype=float, copy=True), requires_grad=True, name=name)


def concat(tensors: Sequence[Tensor], axis: int = -1) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    sizes = [t.data.shape[axis] for t in tensors]
    cuts = np.cumsum(sizes)[:-1]

    def back(g):
        for t, part in zip(tensors, np.split(g, cuts, axis=axis)):
            t._accumulate(part)

    return Tensor(np.concatenate([t.data for t in tensors], axis=axis), parents=tensors, backward=back)


def _scatter_matrix(index: np.ndarray, n_rows: int) -> sp.csr_matrix:
    """Sparse 0/1 matrix S with S[index[i], i] = 1, so S @ x sums rows by index."""
    return sp.csr_matrix((np.ones(len(index)), (index, np.arange(len(index)))), shape=(n_rows, len(index)))


def _scatter_rows(x: np.ndarray, index: np.ndarray, n_rows: int) -> np.ndarray:
    flat = x.reshape(len(index), -1)
    return np.asarray(_scatter_matrix(index, n_rows) @ flat).reshape((n_rows,) + x.shape[1:])


def take(x: Tensor, index: np.ndarray) -> Tensor:
    """Rows of ``x`` gathered by an integer index array (axis 0)."""
    index = np.asarray(index, dtype=np.int64)
    return Tensor(
        x.data[index],
        parents=(x,),
        backward=lambda g: x._accumulate(_scatter_rows(g, index, x.data.shape[0])),
    )


def segment_sum(x: Tensor, segments: np.ndarray, num_segments: int) -> Tensor:
    """Sum rows of ``x`` into ``num_segments`` buckets (scatter-add on axis 0)."""
    segments = np.asarray(segments, dtype=np.int64)
    out = _scatter_rows(x.data, segments, num_segments)
    return Tensor(out, parents=(x,), backward=lambda g: x._accumulate(g[segments]))


def segment_softmax(logits: Tensor, segments: np.ndarray, num_segments: int) -> Tensor:
    """Softmax of edge logits within each destination segment (axis 0).

    The per-segment max is subtracted as a constant, which leaves the
    result and its gradient unchanged.
    """
    segments = np.asarray(segments, dtype=np.int64)
    shift = np.full((num_segments,) + logits.data.shape[1:], -np.inf)
    np.maximum.at(shift, segments, logits.data)
    ex = (logits - shift[segments]).exp()
    denom = segment_sum(ex, segments, num_segments)
    return ex / take(denom, segments)


def log_softmax(x: Tensor, axis: int = -1) -> Tensor:
    shift = x.data.max(axis=axis, keepdims=True)
    z = x - shift
    return z - z.exp().sum(axis=axis, keepdims=True).log()


def numeric_grad(f: Callable[[], float], param: Tensor, eps: float = 1e-5, entries=None) -> np.ndarray:
    """Central finite-difference gradient of scalar ``f`` w.r.t. ``param``.

    ``entries`` restricts the estimate to those flat indices (others stay 0).
    """
    grad = np.zeros_like(param.data)
    flat = param.data.reshape(-1)
    gflat = grad.reshape(-1)
    for i in range(flat.size) if entries is None else entries:
        old = flat[i]
        flat[i] = old + eps
        up = f()
        flat[i] = old - eps
        down = f()
        flat[i] = old
        gflat[i] = (up - down) / (2 * eps)
    return grad
