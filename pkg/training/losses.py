"""
Segmentation objectives: stable binary cross-entropy on logits, soft Dice and
their per-region combination.
"""

from typing import Tuple, Union

import numpy as np
from scipy.special import expit

from engine import Function, Tensor, as_tensor
from engine import functional as F
from utils.errors import ShapeError

Axis = Union[int, Tuple[int, ...], None]

DEFAULT_SMOOTH_EPS = 1e-6


class BCEWithLogits(Function):
    """Elementwise max(x, 0) − x·y + log(1 + e^−|x|); the target is a constant."""

    def forward(self, x: np.ndarray, *, target: np.ndarray) -> np.ndarray:
        self.x, self.target = x, target
        return np.maximum(x, 0) - x * target + np.log1p(np.exp(-np.abs(x)))

    def backward(self, grad: np.ndarray):
        return (grad * (expit(self.x) - self.target),)


def _check_pair(logits: Tensor, target: np.ndarray, where: str) -> None:
    if logits.shape != target.shape:
        raise ShapeError(f"{where}: logits {logits.shape} and target {target.shape} differ")


def _target_array(target, dtype: np.dtype) -> np.ndarray:
    values = target.data if isinstance(target, Tensor) else np.asarray(target)
    return values.astype(dtype, copy=False)


def bce_loss(logits: Tensor, target, axis: Axis = None) -> Tensor:
    """
    Mean binary cross-entropy in logit form.

    Args:
        logits: Raw scores
        target: Binary targets, same shape
        axis: Axes to average over (None = all)

    Returns:
        Scalar, or the per-index means when `axis` leaves axes behind
    """
    logits = as_tensor(logits)
    y = _target_array(target, logits.dtype)
    _check_pair(logits, y, "bce_loss")
    return F.mean(BCEWithLogits.apply(logits, target=y), axis=axis)


def dice_loss(logits: Tensor, target, eps: float = DEFAULT_SMOOTH_EPS, axis: Axis = None) -> Tensor:
    """
    Soft Dice loss 1 − (2Σ y·p + ε) / (Σ y + Σ p + ε) with p = sigmoid(logits).

    Args:
        logits: Raw scores
        target: Binary targets, same shape
        eps: Smoothing added to numerator and denominator
        axis: Axes the sums run over (None = all)

    Returns:
        Scalar, or one loss per remaining index
    """
    logits = as_tensor(logits)
    y = _target_array(target, logits.dtype)
    _check_pair(logits, y, "dice_loss")
    p = F.sigmoid(logits)
    intersection = F.sum(p * y, axis=axis)
    union = F.sum(p, axis=axis) + y.sum(axis=axis)
    return 1.0 - (2.0 * intersection + eps) / (union + eps)


def bce_dice_loss(logits: Tensor, target, eps: float = DEFAULT_SMOOTH_EPS) -> Tensor:
    """
    Per-region BCE + Dice, averaged over the three regions.

    Each region channel gets its own BCE (mean over batch and pixels) and its
    own Dice (sums over batch and pixels); the total is the mean of the three
    channel sums.

    Args:
        logits: [N, 3, H, W]
        target: [N, 3, H, W] binary, channels WT, TC, ET
        eps: Dice smoothing

    Returns:
        Scalar loss

    Raises:
        ShapeError: If there are not exactly 3 channels or shapes differ
    """
    logits = as_tensor(logits)
    if logits.ndim != 4 or logits.shape[1] != 3:
        raise ShapeError(f"bce_dice_loss expects N×3×H×W logits, got {logits.shape}")
    axes = (0, 2, 3)
    per_region = bce_loss(logits, target, axis=axes) + dice_loss(logits, target, eps=eps, axis=axes)
    return F.mean(per_region)
