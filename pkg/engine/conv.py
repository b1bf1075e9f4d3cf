"""
Convolution and pooling kernels.

All spatial ops lower to patch views (`sliding_window_view`) contracted with
the kernel, i.e. the patch-matrix route. Convolution is cross-correlation:
the kernel is never flipped. Layouts are NCHW; kernels are
[out, in, kh, kw] for convolution and [in, out, kh, kw] for the transposed one.
"""

from typing import Optional

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from engine.tensor import Function
from utils.errors import ShapeError


def _check_nchw(x: np.ndarray, op: str) -> None:
    if x.ndim != 4:
        raise ShapeError(f"{op} expects an N×C×H×W input, got shape {x.shape}")


def pad2d(x: np.ndarray, padding: int, value: float = 0.0) -> np.ndarray:
    if padding == 0:
        return x
    return np.pad(x, ((0, 0), (0, 0), (padding, padding), (padding, padding)), constant_values=value)


def patches(xp: np.ndarray, kh: int, kw: int, stride: int) -> np.ndarray:
    """Strided windows of a padded NCHW array: (N, C, H', W', kh, kw)."""
    return sliding_window_view(xp, (kh, kw), axis=(2, 3))[:, :, ::stride, ::stride]


def fold_patches(cols: np.ndarray, padded_shape: tuple, stride: int) -> np.ndarray:
    """
    Scatter-add patch gradients (N, C, H', W', kh, kw) back onto a padded image.

    Adjoint of `patches`.
    """
    _, _, out_h, out_w, kh, kw = cols.shape
    out = np.zeros(padded_shape, dtype=cols.dtype)
    for i in range(kh):
        for j in range(kw):
            out[:, :, i : i + stride * out_h : stride, j : j + stride * out_w : stride] += cols[:, :, :, :, i, j]
    return out


def _unpad(x: np.ndarray, padding: int) -> np.ndarray:
    if padding == 0:
        return x
    return x[:, :, padding:-padding, padding:-padding]


def _check_window(h: int, w: int, kh: int, kw: int, padding: int, stride: int, op: str) -> None:
    if stride < 1:
        raise ShapeError(f"{op}: stride must be >= 1, got {stride}")
    if padding < 0:
        raise ShapeError(f"{op}: padding must be >= 0, got {padding}")
    if kh > h + 2 * padding or kw > w + 2 * padding:
        raise ShapeError(
            f"{op}: window {kh}×{kw} larger than padded input {h + 2 * padding}×{w + 2 * padding}"
        )


class Conv2d(Function):
    """out[n,o] = Σ_c x[n,c] ⋆ w[o,c] + b[o]."""

    def forward(self, x: np.ndarray, w: np.ndarray, b: Optional[np.ndarray] = None, *, stride: int = 1, padding: int = 0) -> np.ndarray:
        _check_nchw(x, "conv2d")
        if w.ndim != 4 or w.shape[1] != x.shape[1]:
            raise ShapeError(f"conv2d: kernel {w.shape} does not match input channels {x.shape[1]}")
        if b is not None and b.shape != (w.shape[0],):
            raise ShapeError(f"conv2d: bias {b.shape} does not match {w.shape[0]} output channels")
        _check_window(x.shape[2], x.shape[3], w.shape[2], w.shape[3], padding, stride, "conv2d")
        self.stride, self.padding = stride, padding
        self.x_shape = x.shape
        self.w = w
        xp = pad2d(x, padding)
        self.padded_shape = xp.shape
        self.cols = patches(xp, w.shape[2], w.shape[3], stride)
        out = np.tensordot(self.cols, w, axes=([1, 4, 5], [1, 2, 3])).transpose(0, 3, 1, 2)
        if b is not None:
            out = out + b[None, :, None, None]
        return np.ascontiguousarray(out)

    def backward(self, grad: np.ndarray):
        gx = gw = gb = None
        if self.needs_input_grad[0]:
            dcols = np.tensordot(grad, self.w, axes=([1], [0])).transpose(0, 3, 1, 2, 4, 5)
            gx = _unpad(fold_patches(dcols, self.padded_shape, self.stride), self.padding)
        if self.needs_input_grad[1]:
            gw = np.tensordot(grad, self.cols, axes=([0, 2, 3], [0, 2, 3]))
        if len(self.needs_input_grad) > 2 and self.needs_input_grad[2]:
            gb = grad.sum(axis=(0, 2, 3))
        return gx, gw, gb


class DepthwiseConv2d(Function):
    """One kh×kw filter per channel: out[n,c] = x[n,c] ⋆ w[c,0]."""

    def forward(self, x: np.ndarray, w: np.ndarray, *, stride: int = 1, padding: int = 0) -> np.ndarray:
        _check_nchw(x, "depthwise_conv2d")
        if w.ndim != 4 or w.shape[0] != x.shape[1] or w.shape[1] != 1:
            raise ShapeError(f"depthwise_conv2d: kernel {w.shape} must be [{x.shape[1]}, 1, kh, kw]")
        _check_window(x.shape[2], x.shape[3], w.shape[2], w.shape[3], padding, stride, "depthwise_conv2d")
        self.stride, self.padding = stride, padding
        self.w = w
        xp = pad2d(x, padding)
        self.padded_shape = xp.shape
        self.cols = patches(xp, w.shape[2], w.shape[3], stride)
        return np.einsum("nchwij,cij->nchw", self.cols, w[:, 0], optimize=True)

    def backward(self, grad: np.ndarray):
        gx = gw = None
        if self.needs_input_grad[0]:
            dcols = np.einsum("nchw,cij->nchwij", grad, self.w[:, 0], optimize=True)
            gx = _unpad(fold_patches(dcols, self.padded_shape, self.stride), self.padding)
        if self.needs_input_grad[1]:
            gw = np.einsum("nchw,nchwij->cij", grad, self.cols, optimize=True)[:, None]
        return gx, gw


class ConvTranspose2d(Function):
    """
    Gradient-of-convolution: the forward pass is conv2d's backward-data pass.

    Output size is (H−1)·stride − 2·padding + kh + output_padding.
    """

    def forward(
        self,
        y: np.ndarray,
        w: np.ndarray,
        b: Optional[np.ndarray] = None,
        *,
        stride: int = 1,
        padding: int = 0,
        output_padding: int = 0,
    ) -> np.ndarray:
        _check_nchw(y, "conv_transpose2d")
        if w.ndim != 4 or w.shape[0] != y.shape[1]:
            raise ShapeError(f"conv_transpose2d: kernel {w.shape} does not match input channels {y.shape[1]}")
        if b is not None and b.shape != (w.shape[1],):
            raise ShapeError(f"conv_transpose2d: bias {b.shape} does not match {w.shape[1]} output channels")
        if stride < 1 or padding < 0 or not 0 <= output_padding < max(stride, 1):
            raise ShapeError(
                f"conv_transpose2d: invalid stride={stride}, padding={padding}, output_padding={output_padding}"
            )
        n, _, h, wd = y.shape
        kh, kw = w.shape[2], w.shape[3]
        full_h = (h - 1) * stride + kh + output_padding
        full_w = (wd - 1) * stride + kw + output_padding
        if full_h - 2 * padding < 1 or full_w - 2 * padding < 1:
            raise ShapeError(f"conv_transpose2d: padding {padding} leaves an empty output for input {y.shape}")
        self.stride, self.padding = stride, padding
        self.y, self.w = y, w
        self.in_hw = (h, wd)
        dcols = np.tensordot(y, w, axes=([1], [0])).transpose(0, 3, 1, 2, 4, 5)
        out = _unpad(fold_patches(dcols, (n, w.shape[1], full_h, full_w), stride), padding)
        if b is not None:
            out = out + b[None, :, None, None]
        return np.ascontiguousarray(out)

    def backward(self, grad: np.ndarray):
        h, wd = self.in_hw
        kh, kw = self.w.shape[2], self.w.shape[3]
        gcols = patches(pad2d(grad, self.padding), kh, kw, self.stride)[:, :, :h, :wd]
        gy = gw = gb = None
        if self.needs_input_grad[0]:
            gy = np.tensordot(gcols, self.w, axes=([1, 4, 5], [1, 2, 3])).transpose(0, 3, 1, 2)
        if self.needs_input_grad[1]:
            gw = np.tensordot(self.y, gcols, axes=([0, 2, 3], [0, 2, 3]))
        if len(self.needs_input_grad) > 2 and self.needs_input_grad[2]:
            gb = grad.sum(axis=(0, 2, 3))
        return gy, gw, gb


class MaxPool2d(Function):
    """Window maximum; the gradient goes to the argmax, ties to the lowest flat index."""

    def forward(self, x: np.ndarray, *, k: int, stride: int, padding: int = 0) -> np.ndarray:
        _check_nchw(x, "maxpool2d")
        _check_window(x.shape[2], x.shape[3], k, k, padding, stride, "maxpool2d")
        if padding * 2 > k:
            raise ShapeError(f"maxpool2d: padding {padding} must be at most half the window {k}")
        self.k, self.stride, self.padding = k, stride, padding
        xp = pad2d(x, padding, value=-np.inf)
        self.padded_shape = xp.shape
        cols = patches(xp, k, k, stride)
        n, c, oh, ow = cols.shape[:4]
        flat = cols.reshape(n, c, oh, ow, k * k)
        self.argmax = flat.argmax(axis=-1)
        return np.take_along_axis(flat, self.argmax[..., None], axis=-1)[..., 0]

    def backward(self, grad: np.ndarray):
        n, c, oh, ow = grad.shape
        rows = np.arange(oh)[None, None, :, None] * self.stride + self.argmax // self.k
        cols = np.arange(ow)[None, None, None, :] * self.stride + self.argmax % self.k
        nn = np.broadcast_to(np.arange(n)[:, None, None, None], grad.shape)
        cc = np.broadcast_to(np.arange(c)[None, :, None, None], grad.shape)
        gxp = np.zeros(self.padded_shape, dtype=grad.dtype)
        np.add.at(gxp, (nn, cc, rows, cols), grad)
        return (_unpad(gxp, self.padding),)
