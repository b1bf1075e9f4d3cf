"""
Heatmap and prediction overlays, written as binary PPM (P6) through Pillow.
"""

from pathlib import Path
from typing import Union

import numpy as np
from PIL import Image

from models.data_models import RegionMask
from utils.errors import ShapeError
from utils.logger import setup_logger

logger = setup_logger(__name__)

ALPHA = 0.4

GREEN = np.array([0.0, 255.0, 0.0])
YELLOW = np.array([255.0, 255.0, 0.0])
ORANGE = np.array([255.0, 165.0, 0.0])
RED_ORANGE = np.array([255.0, 90.0, 0.0])
RED = np.array([255.0, 0.0, 0.0])


def colormap(heat: np.ndarray) -> np.ndarray:
    """
    Map intensities in [0, 1] to RGB (float, 0..255).

    [0, ⅓) green, [⅓, ⅔) yellow shading to orange, [⅔, 1] red-orange
    shading to pure red at 1.
    """
    h = np.clip(np.asarray(heat, dtype=np.float64), 0.0, 1.0)[..., None]
    low, high = 1.0 / 3.0, 2.0 / 3.0
    t_mid = np.clip((h - low) / (high - low), 0.0, 1.0)
    t_high = np.clip((h - high) / (1.0 - high), 0.0, 1.0)
    mid = YELLOW + (ORANGE - YELLOW) * t_mid
    top = RED_ORANGE + (RED - RED_ORANGE) * t_high
    return np.where(h < low, GREEN, np.where(h < high, mid, top))


def _grayscale(image_slice: np.ndarray) -> np.ndarray:
    image = np.asarray(image_slice, dtype=np.float64)
    base = image[0] if image.ndim == 3 else image
    if base.ndim != 2:
        raise ShapeError(f"overlay expects a [C, H, W] or [H, W] image, got {image.shape}")
    return np.repeat(np.clip(base, 0.0, 1.0)[..., None] * 255.0, 3, axis=-1)


def overlay(image_slice: np.ndarray, heatmap: np.ndarray) -> np.ndarray:
    """
    Blend a heatmap over the grayscale first channel.

    Each pixel mixes in the colormap with weight ALPHA · h, so a zero heatmap
    leaves the grayscale base unchanged.

    Args:
        image_slice: [C, H, W] or [H, W] in [0, 1]
        heatmap: [H, W] in [0, 1]

    Returns:
        uint8 RGB raster [H, W, 3]

    Raises:
        ShapeError: If the image and heatmap sizes differ
    """
    base = _grayscale(image_slice)
    heat = np.clip(np.asarray(heatmap, dtype=np.float64), 0.0, 1.0)
    if heat.shape != base.shape[:2]:
        raise ShapeError(f"heatmap {heat.shape} does not match image {base.shape[:2]}")
    weight = ALPHA * heat[..., None]
    blended = (1.0 - weight) * base + weight * colormap(heat)
    return np.clip(np.rint(blended), 0, 255).astype(np.uint8)


def prediction_preview(image_slice: np.ndarray, mask: RegionMask) -> np.ndarray:
    """Colour-code a prediction over the grayscale base: WT red, TC green, ET blue."""
    base = _grayscale(image_slice)
    if mask.shape != base.shape[:2]:
        raise ShapeError(f"mask {mask.shape} does not match image {base.shape[:2]}")
    colour = np.stack([mask.wt, mask.tc, mask.et], axis=-1).astype(np.float64) * 255.0
    weight = ALPHA * mask.wt[..., None].astype(np.float64)
    blended = (1.0 - weight) * base + weight * colour
    return np.clip(np.rint(blended), 0, 255).astype(np.uint8)


def write_ppm(path: Union[str, Path], rgb: np.ndarray) -> Path:
    """
    Write an RGB raster as binary PPM: "P6\\n<w> <h>\\n255\\n" then RGB bytes.

    Raises:
        ShapeError: If the raster is not [H, W, 3]
    """
    rgb = np.asarray(rgb)
    if rgb.ndim != 3 or rgb.shape[2] != 3:
        raise ShapeError(f"PPM raster must be [H, W, 3], got {rgb.shape}")
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    Image.fromarray(np.ascontiguousarray(rgb, dtype=np.uint8)).save(path, format="PPM")
    logger.debug(f"Wrote {path} ({rgb.shape[1]}x{rgb.shape[0]})")
    return path
