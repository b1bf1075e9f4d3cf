"""
Elementwise, reduction, shape and activation operations.

Each class is a `Function`: `forward` works on raw numpy arrays and `backward`
returns one gradient per tensor input. Broadcasting is numpy's; gradients are
summed back to the input shapes with `Function.unbroadcast`.
"""

from typing import Optional, Tuple, Union

import numpy as np
from scipy.special import expit

from engine.tensor import Function
from utils.errors import ShapeError

Axis = Union[int, Tuple[int, ...], None]

# softplus(x) is returned as x above this threshold
SOFTPLUS_LINEAR_THRESHOLD = 30.0


class Add(Function):
    def forward(self, x: np.ndarray, y: np.ndarray) -> np.ndarray:
        self.shapes = (x.shape, y.shape)
        return x + y

    def backward(self, grad: np.ndarray):
        return self.unbroadcast(grad, self.shapes[0]), self.unbroadcast(grad, self.shapes[1])


class Sub(Function):
    def forward(self, x: np.ndarray, y: np.ndarray) -> np.ndarray:
        self.shapes = (x.shape, y.shape)
        return x - y

    def backward(self, grad: np.ndarray):
        return self.unbroadcast(grad, self.shapes[0]), self.unbroadcast(-grad, self.shapes[1])


class Mul(Function):
    def forward(self, x: np.ndarray, y: np.ndarray) -> np.ndarray:
        self.x, self.y = x, y
        return x * y

    def backward(self, grad: np.ndarray):
        gx = self.unbroadcast(grad * self.y, self.x.shape) if self.needs_input_grad[0] else None
        gy = self.unbroadcast(grad * self.x, self.y.shape) if self.needs_input_grad[1] else None
        return gx, gy


class Div(Function):
    def forward(self, x: np.ndarray, y: np.ndarray) -> np.ndarray:
        self.x, self.y = x, y
        return x / y

    def backward(self, grad: np.ndarray):
        gx = self.unbroadcast(grad / self.y, self.x.shape) if self.needs_input_grad[0] else None
        gy = (
            self.unbroadcast(-grad * self.x / (self.y * self.y), self.y.shape)
            if self.needs_input_grad[1]
            else None
        )
        return gx, gy


class Neg(Function):
    def forward(self, x: np.ndarray) -> np.ndarray:
        return -x

    def backward(self, grad: np.ndarray):
        return (-grad,)


class MatMul(Function):
    """Batched matrix product over the last two axes; leading batch axes broadcast."""

    def forward(self, a: np.ndarray, b: np.ndarray) -> np.ndarray:
        if a.ndim < 2 or b.ndim < 2:
            raise ShapeError(f"matmul needs at least 2-D operands, got {a.shape} and {b.shape}")
        if a.shape[-1] != b.shape[-2]:
            raise ShapeError(f"matmul inner dimensions differ: {a.shape} @ {b.shape}")
        self.a, self.b = a, b
        return np.matmul(a, b)

    def backward(self, grad: np.ndarray):
        ga = gb = None
        if self.needs_input_grad[0]:
            ga = self.unbroadcast(np.matmul(grad, np.swapaxes(self.b, -1, -2)), self.a.shape)
        if self.needs_input_grad[1]:
            gb = self.unbroadcast(np.matmul(np.swapaxes(self.a, -1, -2), grad), self.b.shape)
        return ga, gb


class Reshape(Function):
    def forward(self, x: np.ndarray, shape: Tuple[int, ...]) -> np.ndarray:
        self.in_shape = x.shape
        try:
            return x.reshape(shape)
        except ValueError as e:
            raise ShapeError(f"cannot reshape {x.shape} to {shape}") from e

    def backward(self, grad: np.ndarray):
        return (grad.reshape(self.in_shape),)


class Transpose(Function):
    def forward(self, x: np.ndarray, axes: Optional[Tuple[int, ...]] = None) -> np.ndarray:
        self.axes = tuple(reversed(range(x.ndim))) if axes is None else axes
        return np.transpose(x, self.axes)

    def backward(self, grad: np.ndarray):
        return (np.transpose(grad, np.argsort(self.axes)),)


def _expand_reduced(grad: np.ndarray, in_shape: Tuple[int, ...], axis: Axis, keepdims: bool) -> np.ndarray:
    if axis is None:
        return np.broadcast_to(grad.reshape((1,) * len(in_shape)), in_shape)
    axes = (axis,) if isinstance(axis, int) else axis
    axes = tuple(a % len(in_shape) for a in axes)
    if not keepdims:
        for a in sorted(axes):
            grad = np.expand_dims(grad, a)
    return np.broadcast_to(grad, in_shape)


class Sum(Function):
    def forward(self, x: np.ndarray, axis: Axis = None, keepdims: bool = False) -> np.ndarray:
        self.in_shape, self.axis, self.keepdims = x.shape, axis, keepdims
        return np.asarray(x.sum(axis=axis, keepdims=keepdims))

    def backward(self, grad: np.ndarray):
        return (np.array(_expand_reduced(grad, self.in_shape, self.axis, self.keepdims)),)


class Mean(Function):
    def forward(self, x: np.ndarray, axis: Axis = None, keepdims: bool = False) -> np.ndarray:
        self.in_shape, self.axis, self.keepdims = x.shape, axis, keepdims
        out = np.asarray(x.mean(axis=axis, keepdims=keepdims))
        self.count = x.size // max(out.size, 1)
        return out

    def backward(self, grad: np.ndarray):
        expanded = _expand_reduced(grad, self.in_shape, self.axis, self.keepdims)
        return (np.array(expanded / self.count),)


class Concat(Function):
    def forward(self, *arrays: np.ndarray, axis: int = 0) -> np.ndarray:
        ref = arrays[0]
        for arr in arrays[1:]:
            if arr.ndim != ref.ndim or any(
                a != b for i, (a, b) in enumerate(zip(arr.shape, ref.shape)) if i != axis % ref.ndim
            ):
                raise ShapeError(f"concat along axis {axis}: incompatible shapes {ref.shape} and {arr.shape}")
        self.axis = axis
        self.splits = np.cumsum([a.shape[axis] for a in arrays])[:-1]
        return np.concatenate(arrays, axis=axis)

    def backward(self, grad: np.ndarray):
        return tuple(np.split(grad, self.splits, axis=self.axis))


class ReLU(Function):
    def forward(self, x: np.ndarray) -> np.ndarray:
        self.mask = x > 0
        return np.where(self.mask, x, 0).astype(x.dtype)

    def backward(self, grad: np.ndarray):
        return (grad * self.mask,)


class Softplus(Function):
    """ln(1 + e^x), linear above SOFTPLUS_LINEAR_THRESHOLD."""

    def forward(self, x: np.ndarray) -> np.ndarray:
        self.x = x
        safe = np.minimum(x, SOFTPLUS_LINEAR_THRESHOLD)
        return np.where(x > SOFTPLUS_LINEAR_THRESHOLD, x, np.log1p(np.exp(safe))).astype(x.dtype)

    def backward(self, grad: np.ndarray):
        slope = np.where(self.x > SOFTPLUS_LINEAR_THRESHOLD, 1.0, expit(self.x)).astype(grad.dtype)
        return (grad * slope,)


class Sigmoid(Function):
    def forward(self, x: np.ndarray) -> np.ndarray:
        self.out = expit(x)
        return self.out

    def backward(self, grad: np.ndarray):
        return (grad * self.out * (1.0 - self.out),)


class Softmax(Function):
    def forward(self, x: np.ndarray, axis: int = -1) -> np.ndarray:
        self.axis = axis
        shifted = np.exp(x - x.max(axis=axis, keepdims=True))
        self.out = shifted / shifted.sum(axis=axis, keepdims=True)
        return self.out

    def backward(self, grad: np.ndarray):
        s = self.out
        return (s * (grad - (grad * s).sum(axis=self.axis, keepdims=True)),)
