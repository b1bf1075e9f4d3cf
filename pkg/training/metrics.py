"""
Hard-mask Dice metric.
"""

from typing import Dict, Sequence

import numpy as np

from models.data_models import REGIONS, RegionMask
from utils.errors import DataError, ShapeError


def _binary(mask, name: str) -> np.ndarray:
    arr = np.asarray(mask)
    if arr.dtype != bool and not np.isin(arr, (0, 1)).all():
        raise DataError(f"dice_score: {name} mask is not binary")
    return arr.astype(bool)


def dice_score(pred_mask, gt_mask) -> float:
    """
    Dice = 2|P ∩ G| / (|P| + |G|); two empty masks score 1.0.

    Args:
        pred_mask: Binary prediction
        gt_mask: Binary ground truth, same shape

    Returns:
        Score in [0, 1]

    Raises:
        DataError: If either mask holds values other than 0/1
        ShapeError: If the shapes differ
    """
    p, g = _binary(pred_mask, "predicted"), _binary(gt_mask, "ground-truth")
    if p.shape != g.shape:
        raise ShapeError(f"dice_score: prediction {p.shape} and ground truth {g.shape} differ")
    total = int(p.sum()) + int(g.sum())
    if total == 0:
        return 1.0
    return 2.0 * int((p & g).sum()) / total


def region_dice(predictions: Sequence[RegionMask], targets: Sequence[RegionMask]) -> Dict[str, float]:
    """Dice per region with every slice of the sequence pooled into one mask."""
    if len(predictions) != len(targets) or not predictions:
        raise DataError(f"region_dice needs matching non-empty sequences, got {len(predictions)} and {len(targets)}")
    scores = {}
    for index, region in enumerate(REGIONS):
        pred = np.stack([m.stack(bool)[index] for m in predictions])
        gt = np.stack([m.stack(bool)[index] for m in targets])
        scores[region] = dice_score(pred, gt)
    return scores
