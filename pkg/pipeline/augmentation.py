"""
Paired on-the-fly augmentation: random 90° rotation, horizontal flip, vertical
flip and shift-scale-rotate, applied identically to image and mask.

Shift/scale/rotate ranges follow the usual augmentation-library defaults
(shift ±6.25 %, scale ±10 %, rotation ±45°, reflect-101 borders).
"""

import math
from typing import Optional, Tuple

import numpy as np
from pydantic import BaseModel, Field
from scipy import ndimage

from models.data_models import RegionMask, SlicePair


class AugmentationConfig(BaseModel):
    p_rotate90: float = Field(default=0.5, ge=0, le=1)
    p_hflip: float = Field(default=0.5, ge=0, le=1)
    p_vflip: float = Field(default=0.5, ge=0, le=1)
    p_shift_scale_rotate: float = Field(default=0.5, ge=0, le=1)
    shift_limit: float = Field(default=0.0625, ge=0, description="Max shift as a fraction of the side")
    scale_limit: float = Field(default=0.1, ge=0, description="Max relative zoom change")
    rotate_limit: float = Field(default=45.0, ge=0, description="Max rotation in degrees")


class AugmentationDraw(BaseModel):
    """The random choices for one sample; `None` / 0 / False means the step is skipped."""

    rotate_k: int = 0
    hflip: bool = False
    vflip: bool = False
    shift_scale_rotate: Optional[Tuple[float, float, float, float]] = Field(
        default=None, description="(shift_rows, shift_cols, scale, angle_degrees)"
    )

    @property
    def is_identity(self) -> bool:
        return self.rotate_k == 0 and not self.hflip and not self.vflip and self.shift_scale_rotate is None


def draw_augmentation(rng_seed: int, cfg: Optional[AugmentationConfig] = None) -> AugmentationDraw:
    """
    Draw the augmentation choices for one seed.

    Every parameter is drawn whether or not its step fires, so the stream
    layout never depends on earlier outcomes.
    """
    cfg = cfg or AugmentationConfig()
    rng = np.random.default_rng(rng_seed)
    rotate = rng.random() < cfg.p_rotate90
    k = int(rng.integers(0, 4))
    hflip = bool(rng.random() < cfg.p_hflip)
    vflip = bool(rng.random() < cfg.p_vflip)
    ssr = rng.random() < cfg.p_shift_scale_rotate
    shift = rng.uniform(-cfg.shift_limit, cfg.shift_limit, size=2)
    scale = 1.0 + rng.uniform(-cfg.scale_limit, cfg.scale_limit)
    angle = rng.uniform(-cfg.rotate_limit, cfg.rotate_limit)
    return AugmentationDraw(
        rotate_k=k if rotate else 0,
        hflip=hflip,
        vflip=vflip,
        shift_scale_rotate=(float(shift[0]), float(shift[1]), float(scale), float(angle)) if ssr else None,
    )


def _affine(plane: np.ndarray, params: Tuple[float, float, float, float], order: int) -> np.ndarray:
    shift_r, shift_c, scale, angle = params
    h, w = plane.shape
    theta = math.radians(angle)
    cos, sin = math.cos(theta), math.sin(theta)
    # output -> input mapping: inverse rotation and zoom about the centre, minus the shift
    matrix = np.array([[cos, sin], [-sin, cos]]) / scale
    center = np.array([(h - 1) / 2.0, (w - 1) / 2.0])
    translation = np.array([shift_r * h, shift_c * w])
    offset = center - matrix @ (center + translation)
    return ndimage.affine_transform(plane, matrix, offset=offset, order=order, mode="mirror")


def apply_augmentation(pair: SlicePair, draw: AugmentationDraw) -> SlicePair:
    """Apply a drawn augmentation to a slice pair."""
    if draw.is_identity:
        return pair
    image = pair.image
    mask = pair.mask.stack(np.float64)
    if draw.rotate_k:
        image = np.rot90(image, draw.rotate_k, axes=(1, 2))
        mask = np.rot90(mask, draw.rotate_k, axes=(1, 2))
    if draw.hflip:
        image, mask = image[:, :, ::-1], mask[:, :, ::-1]
    if draw.vflip:
        image, mask = image[:, ::-1, :], mask[:, ::-1, :]
    if draw.shift_scale_rotate is not None:
        params = draw.shift_scale_rotate
        image = np.stack([_affine(np.asarray(c, dtype=np.float64), params, order=1) for c in image])
        mask = np.stack([_affine(np.ascontiguousarray(m), params, order=0) for m in mask])
    image = np.clip(np.ascontiguousarray(image), 0.0, 1.0).astype(np.float32)
    region = RegionMask.from_stack(np.ascontiguousarray(mask) > 0.5)
    return SlicePair(image=image, mask=region, case_id=pair.case_id, slice_index=pair.slice_index)


def augment(pair: SlicePair, rng_seed: int, cfg: Optional[AugmentationConfig] = None) -> SlicePair:
    """
    Deterministic paired augmentation for one seed.

    Args:
        pair: Input slice pair
        rng_seed: Seed for this (epoch, sample)
        cfg: Probabilities and ranges

    Returns:
        Augmented pair (the input itself when every step misses)
    """
    return apply_augmentation(pair, draw_augmentation(rng_seed, cfg))
