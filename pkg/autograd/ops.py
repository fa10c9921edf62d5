"""Differentiable operations on Tensor.

Binary elementwise ops follow the trailing-dimension broadcasting rule:
shapes are aligned on their last axis, and each aligned pair of extents must
be equal or contain a 1.
"""

import logging
from typing import Optional, Sequence, Tuple

import numpy as np

from autograd.tensor import DomainError, Function, ShapeError, Tensor, as_tensor, numerics

logger = logging.getLogger(__name__)


def broadcast_shape(a: Tuple[int, ...], b: Tuple[int, ...]) -> Tuple[int, ...]:
    """Result shape of broadcasting ``a`` against ``b``."""
    ndim = max(len(a), len(b))
    a = (1,) * (ndim - len(a)) + tuple(a)
    b = (1,) * (ndim - len(b)) + tuple(b)
    out = []
    for x, y in zip(a, b):
        if x != y and x != 1 and y != 1:
            raise ShapeError(f"shapes {a} and {b} are not broadcast-compatible")
        out.append(y if x == 1 else x)
    return tuple(out)


def unbroadcast(grad: np.ndarray, shape: Tuple[int, ...]) -> np.ndarray:
    """Sum out broadcast axes so ``grad`` matches ``shape``."""
    if grad.shape == tuple(shape):
        return grad
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, extent in enumerate(shape):
        if extent == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


class _Binary(Function):
    def forward(self, a, b):
        broadcast_shape(a.shape, b.shape)
        self.a_shape, self.b_shape = a.shape, b.shape
        return self.compute(a, b)


class Add(_Binary):
    def compute(self, a, b):
        return a + b

    def backward(self, grad):
        return unbroadcast(grad, self.a_shape), unbroadcast(grad, self.b_shape)


class Sub(_Binary):
    def compute(self, a, b):
        return a - b

    def backward(self, grad):
        return unbroadcast(grad, self.a_shape), unbroadcast(-grad, self.b_shape)


class Mul(_Binary):
    def compute(self, a, b):
        self.a, self.b = a, b
        return a * b

    def backward(self, grad):
        return unbroadcast(grad * self.b, self.a_shape), unbroadcast(grad * self.a, self.b_shape)


class Div(_Binary):
    def compute(self, a, b):
        if numerics.strict:
            if (b == 0).any():
                raise DomainError("division by zero")
            self.a, self.b = a, b
            return a / b
        small = np.abs(b) < numerics.eps
        if small.any():
            numerics.clamp_counts["div"] += int(small.sum())
            b = np.where(small, np.where(b < 0, -numerics.eps, numerics.eps), b).astype(b.dtype)
        self.a, self.b = a, b
        return a / b

    def backward(self, grad):
        ga = grad / self.b
        gb = -grad * self.a / (self.b * self.b)
        return unbroadcast(ga, self.a_shape), unbroadcast(gb, self.b_shape)


class Neg(Function):
    def forward(self, a):
        return -a

    def backward(self, grad):
        return (-grad,)


class Exp(Function):
    def forward(self, a):
        self.out = np.exp(a)
        return self.out

    def backward(self, grad):
        return (grad * self.out,)


class Log(Function):
    def forward(self, a):
        if numerics.strict:
            if (a <= 0).any():
                raise DomainError("log of a non-positive value")
            self.mask = np.ones(a.shape, dtype=bool)
            self.a = a
            return np.log(a)
        bad = a <= numerics.eps
        if bad.any():
            numerics.clamp_counts["log"] += int(bad.sum())
        self.mask = ~bad
        self.a = np.maximum(a, numerics.eps).astype(a.dtype)
        return np.log(self.a)

    def backward(self, grad):
        return (grad * self.mask / self.a,)


class Abs(Function):
    def forward(self, a):
        self.sign = np.sign(a)
        return np.abs(a)

    def backward(self, grad):
        return (grad * self.sign,)


class Relu(Function):
    def forward(self, a):
        self.mask = a > 0
        return np.where(self.mask, a, 0).astype(a.dtype)

    def backward(self, grad):
        return (grad * self.mask,)


def _stable_sigmoid(a: np.ndarray) -> np.ndarray:
    e = np.exp(-np.abs(a))
    return np.where(a >= 0, 1.0 / (1.0 + e), e / (1.0 + e)).astype(a.dtype)


class Sigmoid(Function):
    def forward(self, a):
        self.out = _stable_sigmoid(a)
        return self.out

    def backward(self, grad):
        return (grad * self.out * (1 - self.out),)


class Tanh(Function):
    def forward(self, a):
        self.out = np.tanh(a)
        return self.out

    def backward(self, grad):
        return (grad * (1 - self.out * self.out),)


class Softplus(Function):
    def forward(self, a):
        self.a = a
        return np.logaddexp(0, a).astype(a.dtype)

    def backward(self, grad):
        return (grad * _stable_sigmoid(self.a),)


_UNARY = {
    "neg": Neg,
    "exp": Exp,
    "log": Log,
    "abs": Abs,
    "relu": Relu,
    "sigmoid": Sigmoid,
    "tanh": Tanh,
    "softplus": Softplus,
}
_BINARY = {"add": Add, "sub": Sub, "mul": Mul, "div": Div}


def elementwise(op_kind: str, a, b=None) -> Tensor:
    """Apply an elementwise op by name.

    Args:
        op_kind: One of add, sub, mul, div, neg, exp, log, abs, relu, sigmoid,
            tanh, softplus.
        a: First operand.
        b: Second operand for binary kinds.

    Returns:
        Tensor: Result with the broadcast shape.
    """
    if op_kind in _BINARY:
        if b is None:
            raise ValueError(f"{op_kind} needs two operands")
        a_t = as_tensor(a, like=b if isinstance(b, Tensor) else None)
        return _BINARY[op_kind].apply(a_t, as_tensor(b, like=a_t))
    if op_kind in _UNARY:
        return _UNARY[op_kind].apply(as_tensor(a))
    raise ValueError(f"Unknown elementwise op: {op_kind}")


def add(a, b):
    return elementwise("add", a, b)


def sub(a, b):
    return elementwise("sub", a, b)


def mul(a, b):
    return elementwise("mul", a, b)


def div(a, b):
    return elementwise("div", a, b)


def neg(a):
    return elementwise("neg", a)


def exp(a):
    return elementwise("exp", a)


def log(a):
    return elementwise("log", a)


def absolute(a):
    return elementwise("abs", a)


def relu(a):
    return elementwise("relu", a)


def sigmoid(a):
    return elementwise("sigmoid", a)


def tanh(a):
    return elementwise("tanh", a)


def softplus(a):
    return elementwise("softplus", a)


class MatMul(Function):
    def forward(self, a, b):
        if a.ndim < 2 or b.ndim < 2:
            raise ShapeError("matmul operands need at least 2 dimensions")
        if a.shape[-1] != b.shape[-2]:
            raise ShapeError(f"matmul inner extents differ: {a.shape} @ {b.shape}")
        broadcast_shape(a.shape[:-2], b.shape[:-2])
        self.a, self.b = a, b
        return np.matmul(a, b)

    def backward(self, grad):
        ga = np.matmul(grad, np.swapaxes(self.b, -1, -2))
        gb = np.matmul(np.swapaxes(self.a, -1, -2), grad)
        return unbroadcast(ga, self.a.shape), unbroadcast(gb, self.b.shape)


def matmul(a: Tensor, b: Tensor) -> Tensor:
    return MatMul.apply(as_tensor(a), as_tensor(b))


def _normalize_axes(axis, ndim) -> Tuple[int, ...]:
    if axis is None:
        return tuple(range(ndim))
    if isinstance(axis, int):
        axis = (axis,)
    return tuple(sorted(ax % ndim for ax in axis))


class Sum(Function):
    def forward(self, a):
        self.in_shape = a.shape
        self.axes = _normalize_axes(self.axis, a.ndim)
        return np.asarray(a.sum(axis=self.axes, keepdims=self.keepdims))

    def backward(self, grad):
        kept = tuple(1 if ax in self.axes else n for ax, n in enumerate(self.in_shape))
        return (np.broadcast_to(np.reshape(grad, kept), self.in_shape).copy(),)


def sum(a: Tensor, axis=None, keepdims: bool = False) -> Tensor:  # noqa: A001
    return Sum.apply(as_tensor(a), axis=axis, keepdims=keepdims)


def mean(a: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    a = as_tensor(a)
    count = int(np.prod([a.shape[ax] for ax in _normalize_axes(axis, a.ndim)]))
    return mul(sum(a, axis=axis, keepdims=keepdims), 1.0 / count)


class Reshape(Function):
    def forward(self, a):
        self.in_shape = a.shape
        return a.reshape(self.shape)

    def backward(self, grad):
        return (grad.reshape(self.in_shape),)


def reshape(a: Tensor, shape: Sequence[int]) -> Tensor:
    return Reshape.apply(as_tensor(a), shape=tuple(shape))


class Transpose(Function):
    def forward(self, a):
        return np.transpose(a, self.axes)

    def backward(self, grad):
        return (np.transpose(grad, np.argsort(self.axes)),)


def transpose(a: Tensor, axes: Sequence[int]) -> Tensor:
    return Transpose.apply(as_tensor(a), axes=tuple(axes))


class BroadcastTo(Function):
    def forward(self, a):
        broadcast_shape(a.shape, self.shape)
        self.in_shape = a.shape
        return np.broadcast_to(a, self.shape).copy()

    def backward(self, grad):
        return (unbroadcast(grad, self.in_shape),)


def broadcast_to(a: Tensor, shape: Sequence[int]) -> Tensor:
    return BroadcastTo.apply(as_tensor(a), shape=tuple(shape))


class GetItem(Function):
    def forward(self, a):
        self.in_shape, self.in_dtype = a.shape, a.dtype
        return np.asarray(a[self.index], order="C")

    def backward(self, grad):
        out = np.zeros(self.in_shape, dtype=self.in_dtype)
        np.add.at(out, self.index, grad)
        return (out,)


def getitem(a: Tensor, index) -> Tensor:
    return GetItem.apply(as_tensor(a), index=index)


class Concat(Function):
    def forward(self, *arrays):
        self.extents = [arr.shape[self.axis] for arr in arrays]
        return np.concatenate(arrays, axis=self.axis)

    def backward(self, grad):
        splits = np.cumsum(self.extents)[:-1]
        return tuple(np.split(grad, splits, axis=self.axis))


def concat(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    return Concat.apply(*[as_tensor(t) for t in tensors], axis=axis)


def stack(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    expanded = []
    for t in tensors:
        t = as_tensor(t)
        ax = axis % (t.ndim + 1)
        expanded.append(reshape(t, t.shape[:ax] + (1,) + t.shape[ax:]))
    return concat(expanded, axis=axis)


class Cumsum(Function):
    def forward(self, a):
        return np.cumsum(a, axis=self.axis)

    def backward(self, grad):
        flipped = np.flip(grad, axis=self.axis)
        return (np.flip(np.cumsum(flipped, axis=self.axis), axis=self.axis),)


def cumsum(a: Tensor, axis: int) -> Tensor:
    return Cumsum.apply(as_tensor(a), axis=axis)


class Clip(Function):
    def forward(self, a):
        self.mask = (a >= self.low) & (a <= self.high)
        return np.clip(a, self.low, self.high)

    def backward(self, grad):
        return (grad * self.mask,)


def clip(a: Tensor, low: float, high: float) -> Tensor:
    return Clip.apply(as_tensor(a), low=low, high=high)


class Softmax(Function):
    def forward(self, a):
        shifted = a - a.max(axis=self.axis, keepdims=True)
        e = np.exp(shifted)
        self.out = e / e.sum(axis=self.axis, keepdims=True)
        return self.out

    def backward(self, grad):
        s = self.out
        return (s * (grad - (grad * s).sum(axis=self.axis, keepdims=True)),)


def softmax(x: Tensor, axis: int = -1) -> Tensor:
    return Softmax.apply(as_tensor(x), axis=axis)


class LayerNormFn(Function):
    def forward(self, x, gamma, beta):
        axis = self.axis % x.ndim
        shape = [1] * x.ndim
        shape[axis] = x.shape[axis]
        self.axis, self.param_shape = axis, gamma.shape
        self.gamma = gamma.reshape(shape)
        mu = x.mean(axis=axis, keepdims=True)
        var = ((x - mu) ** 2).mean(axis=axis, keepdims=True)
        self.inv_std = 1.0 / np.sqrt(var + self.eps)
        self.xhat = (x - mu) * self.inv_std
        return self.xhat * self.gamma + beta.reshape(shape)

    def backward(self, grad):
        axis, n = self.axis, self.xhat.shape[self.axis]
        other = tuple(ax for ax in range(grad.ndim) if ax != axis)
        dgamma = (grad * self.xhat).sum(axis=other).reshape(self.param_shape)
        dbeta = grad.sum(axis=other).reshape(self.param_shape)
        dxhat = grad * self.gamma
        dx = (
            self.inv_std
            / n
            * (
                n * dxhat
                - dxhat.sum(axis=axis, keepdims=True)
                - self.xhat * (dxhat * self.xhat).sum(axis=axis, keepdims=True)
            )
        )
        return dx, dgamma, dbeta


def layernorm(x: Tensor, gamma: Tensor, beta: Tensor, axis: int = -1, eps: float = 1e-5) -> Tensor:
    x = as_tensor(x)
    return LayerNormFn.apply(x, as_tensor(gamma, like=x), as_tensor(beta, like=x), axis=axis, eps=eps)


def _install_operators():
    Tensor.__add__ = lambda self, other: add(self, other)
    Tensor.__radd__ = lambda self, other: add(other, self)
    Tensor.__sub__ = lambda self, other: sub(self, other)
    Tensor.__rsub__ = lambda self, other: sub(other, self)
    Tensor.__mul__ = lambda self, other: mul(self, other)
    Tensor.__rmul__ = lambda self, other: mul(other, self)
    Tensor.__truediv__ = lambda self, other: div(self, other)
    Tensor.__rtruediv__ = lambda self, other: div(other, self)
    Tensor.__neg__ = lambda self: neg(self)
    Tensor.__matmul__ = lambda self, other: matmul(self, other)
    Tensor.__getitem__ = lambda self, index: getitem(self, index)
    Tensor.reshape = lambda self, *shape: reshape(
        self, shape[0] if len(shape) == 1 and not isinstance(shape[0], int) else shape
    )
    Tensor.transpose = lambda self, *axes: transpose(self, axes)
    Tensor.sum = lambda self, axis=None, keepdims=False: sum(self, axis, keepdims)
    Tensor.mean = lambda self, axis=None, keepdims=False: mean(self, axis, keepdims)


_install_operators()
