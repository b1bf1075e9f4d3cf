"""
Functional API over the differentiable operations.

These are the entry points the network, loss and attention code call.
"""

from typing import Optional, Sequence, Tuple, Union

from engine import conv, ops
from engine.tensor import Tensor
from utils.errors import ShapeError


def conv2d(x: Tensor, kernel: Tensor, bias: Optional[Tensor] = None, stride: int = 1, padding: int = 0) -> Tensor:
    """
    2-D cross-correlation.

    Args:
        x: Input [N, C, H, W]
        kernel: Kernel [O, C, kh, kw]
        bias: Optional bias [O]
        stride: Step between windows
        padding: Zero padding on every side

    Returns:
        Output [N, O, H', W'] with H' = floor((H + 2p − kh) / stride) + 1

    Raises:
        ShapeError: On channel, bias or window mismatches
    """
    inputs = (x, kernel) if bias is None else (x, kernel, bias)
    return conv.Conv2d.apply(*inputs, stride=stride, padding=padding)


def depthwise_conv2d(x: Tensor, kernel: Tensor, stride: int = 1, padding: int = 0) -> Tensor:
    """Per-channel filtering with a [C, 1, kh, kw] kernel."""
    return conv.DepthwiseConv2d.apply(x, kernel, stride=stride, padding=padding)


def separable_conv2d(
    x: Tensor,
    depthwise_kernel: Tensor,
    pointwise_kernel: Tensor,
    bias: Optional[Tensor] = None,
    stride: int = 1,
    padding: int = 0,
) -> Tensor:
    """Depthwise spatial filtering followed by a 1×1 channel-mixing convolution."""
    if pointwise_kernel.ndim != 4 or pointwise_kernel.shape[2:] != (1, 1):
        raise ShapeError(f"separable_conv2d: pointwise kernel must be [O, C, 1, 1], got {pointwise_kernel.shape}")
    if pointwise_kernel.shape[1] != depthwise_kernel.shape[0]:
        raise ShapeError(
            f"separable_conv2d: depthwise stage yields {depthwise_kernel.shape[0]} channels, "
            f"pointwise stage expects {pointwise_kernel.shape[1]}"
        )
    spatial = depthwise_conv2d(x, depthwise_kernel, stride=stride, padding=padding)
    return conv2d(spatial, pointwise_kernel, bias)


def conv_transpose2d(
    x: Tensor,
    kernel: Tensor,
    bias: Optional[Tensor] = None,
    stride: int = 1,
    padding: int = 0,
    output_padding: int = 0,
) -> Tensor:
    """Transposed convolution with a [C_in, C_out, kh, kw] kernel."""
    inputs = (x, kernel) if bias is None else (x, kernel, bias)
    return conv.ConvTranspose2d.apply(*inputs, stride=stride, padding=padding, output_padding=output_padding)


def maxpool2d(x: Tensor, k: int, stride: Optional[int] = None, padding: int = 0) -> Tensor:
    return conv.MaxPool2d.apply(x, k=k, stride=k if stride is None else stride, padding=padding)


def relu(x: Tensor) -> Tensor:
    return ops.ReLU.apply(x)


def softplus(x: Tensor) -> Tensor:
    return ops.Softplus.apply(x)


def sigmoid(x: Tensor) -> Tensor:
    return ops.Sigmoid.apply(x)


def softmax(x: Tensor, axis: int = -1) -> Tensor:
    return ops.Softmax.apply(x, axis=axis)


def matmul(a: Tensor, b: Tensor) -> Tensor:
    return ops.MatMul.apply(a, b)


def sum(x: Tensor, axis: Union[int, Tuple[int, ...], None] = None, keepdims: bool = False) -> Tensor:  # noqa: A001
    return ops.Sum.apply(x, axis=axis, keepdims=keepdims)


def mean(x: Tensor, axis: Union[int, Tuple[int, ...], None] = None, keepdims: bool = False) -> Tensor:
    return ops.Mean.apply(x, axis=axis, keepdims=keepdims)


def concat(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    if not tensors:
        raise ShapeError("concat needs at least one tensor")
    return ops.Concat.apply(*tensors, axis=axis)
