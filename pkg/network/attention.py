"""
Self-attention block placed on each encoder skip: a Pixel Attention Module
(softplus-kernel linear attention over positions) plus a Channel Attention
Module (softmax attention over channels), summed.
"""

import numpy as np

from engine import Tensor
from engine import functional as F
from network.layers import Conv2d, Module, check_channels
from utils.errors import ShapeError


class PamParams(Module):
    """
    Projections of the Pixel Attention Module.

    wq, wk, wv map C -> C/r with 1×1 convolutions; w_out maps the attended
    C/r features back to C so they can be added to the input.
    """

    def __init__(self, channels: int, rng: np.random.Generator, reduction: int = 8, dtype: np.dtype = np.float32):
        if reduction < 1 or channels % reduction:
            raise ShapeError(f"PAM: channel count {channels} is not divisible by reduction {reduction}")
        inner = channels // reduction
        self.wq = Conv2d(channels, inner, 1, rng, dtype=dtype)
        self.wk = Conv2d(channels, inner, 1, rng, dtype=dtype)
        self.wv = Conv2d(channels, inner, 1, rng, dtype=dtype)
        self.w_out = Conv2d(inner, channels, 1, rng, dtype=dtype)
        self.channels = channels
        self.reduction = reduction

    def forward(self, x: Tensor) -> Tensor:
        return pam_forward(x, self)


def _positions(t: Tensor) -> Tensor:
    """[N, D, H, W] -> [N, H·W, D]."""
    n, d, h, w = t.shape
    return t.reshape(n, d, h * w).transpose(0, 2, 1)


def pam_forward(x: Tensor, p: PamParams) -> Tensor:
    """
    Pixel attention with φ = softplus feature maps, evaluated in linear order.

    For every position i:
        out_i = φ(Q_i)·(φ(K)ᵀV) / φ(Q_i)·Σ_j φ(K_j)
    and the result is x + w_out(out).

    Args:
        x: Features [N, C, H, W]
        p: Projection parameters

    Returns:
        Tensor of the same shape as x

    Raises:
        ShapeError: If C does not match the projections or is not divisible by r
    """
    check_channels(x, p.channels, "pam_forward")
    n, c, h, w = x.shape
    q = _positions(F.softplus(p.wq(x)))  # [N, HW, d]
    k = _positions(F.softplus(p.wk(x)))  # [N, HW, d]
    v = _positions(p.wv(x))  # [N, HW, d]

    kv = F.matmul(k.transpose(0, 2, 1), v)  # [N, d, d]
    numerator = F.matmul(q, kv)  # [N, HW, d]
    k_sum = k.sum(axis=1, keepdims=True)  # [N, 1, d]
    denominator = F.matmul(q, k_sum.transpose(0, 2, 1))  # [N, HW, 1]
    attended = numerator / denominator

    inner = c // p.reduction
    attended = attended.transpose(0, 2, 1).reshape(n, inner, h, w)
    return x + p.w_out(attended)


def cam_forward(x: Tensor) -> Tensor:
    """
    Channel attention: A = softmax_j(X·Xᵀ) over the (C, C) channel affinity.

    X is x reshaped to (C, H·W); the output is x + reshape(A·X).
    """
    if x.ndim != 4:
        raise ShapeError(f"cam_forward expects N×C×H×W input, got {x.shape}")
    n, c, h, w = x.shape
    q = x.reshape(n, c, h * w)
    energy = F.matmul(q, q.transpose(0, 2, 1))  # [N, C, C]
    attention = F.softmax(energy, axis=-1)
    out = F.matmul(attention, q).reshape(n, c, h, w)
    return x + out


class ChannelAttention(Module):
    """Parameter-free CAM."""

    def forward(self, x: Tensor) -> Tensor:
        return cam_forward(x)


class SelfAttention(Module):
    """PAM + CAM on one skip level."""

    def __init__(self, channels: int, rng: np.random.Generator, reduction: int = 8, dtype: np.dtype = np.float32):
        self.pam = PamParams(channels, rng, reduction=reduction, dtype=dtype)
        self.cam = ChannelAttention()

    def forward(self, x: Tensor) -> Tensor:
        return self.pam(x) + self.cam(x)


def self_attention_forward(x: Tensor, p: PamParams) -> Tensor:
    """pam_forward(x, p) + cam_forward(x)."""
    return pam_forward(x, p) + cam_forward(x)
