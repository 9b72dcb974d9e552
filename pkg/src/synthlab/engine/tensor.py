"""Reverse-mode differentiation on top of numpy.

Every forward op records its parents and a closure mapping the output
gradient to parent gradients. ``Tensor.backward`` walks the recorded graph
in reverse topological order. All data is float64.
"""
from __future__ import annotations

from typing import Callable, Iterable, Sequence

import numpy as np

from synthlab.errors import DegenerateRowError, NumericError, ShapeError

BackwardFn = Callable[[np.ndarray], Sequence["np.ndarray | None"]]


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum ``grad`` down to ``shape`` (inverse of numpy broadcasting)."""
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad.reshape(shape)


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "name", "_parents", "_backward")

    def __init__(self, data, requires_grad: bool = False, name: str | None = None):
        self.data = np.array(data, dtype=np.float64)
        self.grad: np.ndarray | None = None
        self.requires_grad = requires_grad
        self.name = name
        self._parents: tuple[Tensor, ...] = ()
        self._backward: BackwardFn | None = None

    @classmethod
    def from_op(cls, data: np.ndarray, parents: Sequence["Tensor"], backward: BackwardFn) -> "Tensor":
        """Wrap the result of a forward computation and record it on the tape.

        ``backward`` receives dL/d(out) and returns one gradient (or None) per parent,
        each already shaped like that parent.
        """
        data = np.asarray(data, dtype=np.float64)
        # one reduction catches NaN/Inf; the exact test only runs if the sum itself is off
        if not np.isfinite(data.sum()) and not np.isfinite(data).all():
            raise NumericError("non-finite value produced by forward op")
        out = cls.__new__(cls)
        out.data = data
        out.grad = None
        out.name = None
        out.requires_grad = any(p.requires_grad for p in parents)
        if out.requires_grad:
            out._parents = tuple(parents)
            out._backward = backward
        else:
            out._parents = ()
            out._backward = None
        return out

    # basic properties ------------------------------------------------------
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

    def zero_grad(self) -> None:
        self.grad = None

    def __repr__(self) -> str:
        label = f" name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.shape}{label}, requires_grad={self.requires_grad})"

    # autodiff --------------------------------------------------------------
    def backward(self) -> None:
        if self.data.shape not in ((), (1,)):
            raise ShapeError(f"backward() needs a scalar loss, got shape {self.shape}")
        if not self.requires_grad:
            return
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
            for parent in node._parents:
                if parent.requires_grad and id(parent) not in seen:
                    stack.append((parent, False))

        grads: dict[int, np.ndarray] = {id(self): np.ones_like(self.data)}
        for node in reversed(order):
            g = grads.pop(id(node), None)
            if g is None:
                continue
            if node._backward is None:
                # leaf: accumulate into the persistent buffer
                node.grad = g.copy() if node.grad is None else node.grad + g
                continue
            for parent, pg in zip(node._parents, node._backward(g)):
                if pg is None or not parent.requires_grad:
                    continue
                key = id(parent)
                grads[key] = pg if key not in grads else grads[key] + pg

    # operators -------------------------------------------------------------
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

    def __neg__(self):
        return mul(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, index):
        return getitem(self, index)

    def sum(self, axis=None, keepdims: bool = False):
        return tsum(self, axis, keepdims)

    def mean(self, axis=None, keepdims: bool = False):
        return mean(self, axis, keepdims)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)

    def transpose(self, *axes):
        if len(axes) == 1 and isinstance(axes[0], (tuple, list)):
            axes = tuple(axes[0])
        return transpose(self, axes or None)


def tensor(value, requires_grad: bool = False) -> Tensor:
    return value if isinstance(value, Tensor) else Tensor(value, requires_grad=requires_grad)


def parameter(value, name: str | None = None) -> Tensor:
    return Tensor(value, requires_grad=True, name=name)


# elementwise -----------------------------------------------------------------

def add(a, b) -> Tensor:
    a, b = tensor(a), tensor(b)
    return Tensor.from_op(
        a.data + b.data, (a, b),
        lambda g: (_unbroadcast(g, a.shape), _unbroadcast(g, b.shape)),
    )


def sub(a, b) -> Tensor:
    a, b = tensor(a), tensor(b)
    return Tensor.from_op(
        a.data - b.data, (a, b),
        lambda g: (_unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)),
    )


def mul(a, b) -> Tensor:
    a, b = tensor(a), tensor(b)

    def backward(g):
        ga = _unbroadcast(g * b.data, a.shape) if a.requires_grad else None
        gb = _unbroadcast(g * a.data, b.shape) if b.requires_grad else None
        return ga, gb

    return Tensor.from_op(a.data * b.data, (a, b), backward)


def div(a, b) -> Tensor:
    a, b = tensor(a), tensor(b)

    def backward(g):
        ga = _unbroadcast(g / b.data, a.shape) if a.requires_grad else None
        gb = _unbroadcast(-g * a.data / b.data**2, b.shape) if b.requires_grad else None
        return ga, gb

    return Tensor.from_op(a.data / b.data, (a, b), backward)


def square(x) -> Tensor:
    x = tensor(x)
    return Tensor.from_op(x.data**2, (x,), lambda g: (2.0 * x.data * g,))


def exp(x) -> Tensor:
    x = tensor(x)
    with np.errstate(over="ignore"):  # overflow is reported by from_op's finiteness check
        out = np.exp(x.data)
    return Tensor.from_op(out, (x,), lambda g: (g * out,))


def tanh(x) -> Tensor:
    x = tensor(x)
    out = np.tanh(x.data)
    return Tensor.from_op(out, (x,), lambda g: (g * (1.0 - out**2),))


def leaky_relu(x, slope: float = 0.01) -> Tensor:
    if slope <= 0:
        raise ValueError("leaky_relu slope must be positive")
    x = tensor(x)
    scale = np.where(x.data >= 0, 1.0, slope)
    return Tensor.from_op(x.data * scale, (x,), lambda g: (g * scale,))


def relu(x) -> Tensor:
    x = tensor(x)
    live = x.data > 0
    return Tensor.from_op(np.where(live, x.data, 0.0), (x,), lambda g: (g * live,))


# reductions and reshaping ------------------------------------------------------

def tsum(x, axis=None, keepdims: bool = False) -> Tensor:
    x = tensor(x)

    def backward(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, x.shape).copy(),)

    return Tensor.from_op(x.data.sum(axis=axis, keepdims=keepdims), (x,), backward)


def mean(x, axis=None, keepdims: bool = False) -> Tensor:
    x = tensor(x)
    count = x.data.size if axis is None else np.prod([x.shape[a] for a in np.atleast_1d(axis)])
    return tsum(x, axis, keepdims) * (1.0 / count)


def reshape(x, shape) -> Tensor:
    x = tensor(x)
    return Tensor.from_op(x.data.reshape(shape), (x,), lambda g: (g.reshape(x.shape),))


def transpose(x, axes=None) -> Tensor:
    x = tensor(x)
    inverse = None if axes is None else tuple(np.argsort(axes))
    return Tensor.from_op(np.transpose(x.data, axes), (x,), lambda g: (np.transpose(g, inverse),))


def getitem(x, index) -> Tensor:
    x = tensor(x)

    parts = index if isinstance(index, tuple) else (index,)
    basic = all(isinstance(i, (int, slice)) or i is None or i is Ellipsis for i in parts)

    def backward(g):
        full = np.zeros_like(x.data)
        if basic:
            full[index] = g
        else:
            np.add.at(full, index, g)
        return (full,)

    return Tensor.from_op(x.data[index], (x,), backward)


def concat(tensors: Iterable, axis: int = 0) -> Tensor:
    parts = [tensor(t) for t in tensors]
    sizes = [p.shape[axis] for p in parts]
    cuts = np.cumsum(sizes)[:-1]
    return Tensor.from_op(
        np.concatenate([p.data for p in parts], axis=axis), parts,
        lambda g: tuple(np.split(g, cuts, axis=axis)),
    )


# linear algebra --------------------------------------------------------------

def matmul(a, b) -> Tensor:
    a, b = tensor(a), tensor(b)
    if a.ndim < 2 or b.ndim < 2:
        raise ShapeError("matmul needs operands with at least 2 dimensions")
    if a.shape[-1] != b.shape[-2]:
        raise ShapeError(f"matmul inner dimensions disagree: {a.shape} @ {b.shape}")

    def backward(g):
        ga = _unbroadcast(g @ np.swapaxes(b.data, -1, -2), a.shape) if a.requires_grad else None
        gb = _unbroadcast(np.swapaxes(a.data, -1, -2) @ g, b.shape) if b.requires_grad else None
        return ga, gb

    return Tensor.from_op(a.data @ b.data, (a, b), backward)


def linear(x, weight, bias=None) -> Tensor:
    """``x @ weight + bias`` over the last axis, flattening leading axes for the GEMM."""
    x, weight = tensor(x), tensor(weight)
    if x.shape[-1] != weight.shape[0]:
        raise ShapeError(f"linear: input width {x.shape[-1]} != weight rows {weight.shape[0]}")
    lead = x.shape[:-1]
    x2 = x.data.reshape(-1, x.shape[-1])
    out = x2 @ weight.data
    parents = [x, weight]
    if bias is not None:
        bias = tensor(bias)
        out = out + bias.data
        parents.append(bias)

    def backward(g):
        g2 = g.reshape(-1, weight.shape[1])
        gx = (g2 @ weight.data.T).reshape(x.shape) if x.requires_grad else None
        gw = x2.T @ g2 if weight.requires_grad else None
        if bias is None:
            return gx, gw
        return gx, gw, g2.sum(axis=0)

    return Tensor.from_op(out.reshape(*lead, weight.shape[1]), parents, backward)


# normalization and attention -------------------------------------------------

def layer_norm(x, gamma, beta, eps: float = 1e-5) -> Tensor:
    x, gamma, beta = tensor(x), tensor(gamma), tensor(beta)
    d = x.shape[-1] if x.ndim else 0
    if d == 0:
        raise ShapeError("layer_norm over an empty last axis")
    if gamma.shape != (d,) or beta.shape != (d,):
        raise ShapeError(f"layer_norm affine params must have shape ({d},)")
    mu = x.data.mean(axis=-1, keepdims=True)
    centered = x.data - mu
    inv_std = 1.0 / np.sqrt((centered**2).mean(axis=-1, keepdims=True) + eps)
    xhat = centered * inv_std

    def backward(g):
        dxhat = g * gamma.data
        gx = inv_std * (
            dxhat - dxhat.mean(axis=-1, keepdims=True)
            - xhat * (dxhat * xhat).mean(axis=-1, keepdims=True)
        )
        lead = tuple(range(g.ndim - 1))
        return gx, (g * xhat).sum(axis=lead), g.sum(axis=lead)

    return Tensor.from_op(xhat * gamma.data + beta.data, (x, gamma, beta), backward)


def masked_softmax(scores, mask) -> Tensor:
    """Softmax over the last axis; entries where ``mask`` is False get exactly 0."""
    scores = tensor(scores)
    live = np.asarray(mask, dtype=bool)
    if live.shape[-1] == 1 and scores.shape[-1] != 1:
        live = np.broadcast_to(live, live.shape[:-1] + scores.shape[-1:])
    if not live.any(axis=-1).all():
        raise DegenerateRowError("masked_softmax: a row has no unmasked entries")
    probs = scores.data + np.where(live, 0.0, -np.inf)
    if probs.shape != scores.shape:
        raise ShapeError(f"mask {live.shape} does not broadcast to scores {scores.shape}")
    probs -= probs.max(axis=-1, keepdims=True)
    np.exp(probs, out=probs)
    probs /= probs.sum(axis=-1, keepdims=True)

    def backward(g):
        out = g * probs
        out -= probs * out.sum(axis=-1, keepdims=True)
        return (out,)

    return Tensor.from_op(probs, (scores,), backward)
