"""
Test-set evaluation: thresholded predictions, case-level Dice per region.
"""

from collections import defaultdict
from typing import Dict, List, Optional, Sequence

import numpy as np

from engine import Tensor, no_grad
from models.data_models import REGIONS, RegionMask
from models.report_models import CaseReport, EvalReport, RegionDice
from network.decoder import AXUNet, predict_masks
from pipeline.dataset import SliceDataset
from training.metrics import region_dice
from utils.errors import DataError
from utils.logger import setup_logger

logger = setup_logger(__name__)


def _param_dtype(model: AXUNet) -> np.dtype:
    params = model.parameters()
    return params[0].dtype if params else np.dtype(np.float32)


def predict_dataset(
    model: AXUNet,
    dataset: SliceDataset,
    threshold: float = 0.5,
    batch_size: int = 8,
) -> List[RegionMask]:
    """Predicted region masks for every slice, in dataset order."""
    dtype = _param_dtype(model)
    masks: List[RegionMask] = []
    with no_grad():
        for images, _, _ in dataset.batches(batch_size, shuffle=False):
            logits = model(Tensor(images.astype(dtype)))
            masks.extend(predict_masks(logits, threshold))
    return masks


def evaluate_predictions(
    predictions: Sequence[RegionMask],
    targets: Sequence[RegionMask],
    case_ids: Sequence[str],
    split: str = "test",
) -> EvalReport:
    """
    Aggregate slice predictions into a report.

    Slices of one case are pooled into a single mask per region before Dice
    is taken; the aggregate is the per-region mean over cases and the
    overall mean is the mean of the three region scores.

    Raises:
        DataError: If there is nothing to evaluate or the lengths differ
    """
    if not predictions:
        raise DataError(f"cannot evaluate an empty {split} set")
    if not len(predictions) == len(targets) == len(case_ids):
        raise DataError(
            f"{len(predictions)} predictions, {len(targets)} targets and {len(case_ids)} case ids do not line up"
        )

    by_case: Dict[str, List[int]] = defaultdict(list)
    for index, case_id in enumerate(case_ids):
        by_case[case_id].append(index)

    cases: List[CaseReport] = []
    for case_id in sorted(by_case):
        idx = by_case[case_id]
        scores = region_dice([predictions[i] for i in idx], [targets[i] for i in idx])
        cases.append(CaseReport(case_id=case_id, slices=len(idx), dice=RegionDice.from_scores(*(scores[r] for r in REGIONS))))
        logger.debug(f"{case_id}: " + " ".join(f"{r}={scores[r]:.4f}" for r in REGIONS))

    means = [float(np.mean([getattr(c.dice, r.lower()) for c in cases])) for r in REGIONS]
    return EvalReport(split=split, cases=cases, aggregate=RegionDice.from_scores(*means), slices=len(predictions))


def evaluate(
    model: AXUNet,
    dataset: Optional[SliceDataset],
    threshold: float = 0.5,
    split: str = "test",
    batch_size: int = 8,
) -> EvalReport:
    """
    Evaluate a model on a slice dataset.

    Args:
        model: Trained network
        dataset: Slices with ground-truth masks
        threshold: Sigmoid threshold for hard masks
        split: Partition name recorded in the report
        batch_size: Inference batch size

    Returns:
        EvalReport with per-case and aggregate Dice

    Raises:
        DataError: If the dataset is empty
    """
    if dataset is None or len(dataset) == 0:
        raise DataError(f"cannot evaluate an empty {split} set")
    predictions = predict_dataset(model, dataset, threshold, batch_size)
    targets = [RegionMask.from_stack(m > 0.5) for m in dataset.masks]
    report = evaluate_predictions(predictions, targets, dataset.case_ids, split)
    logger.info(
        f"Evaluated {report.slices} {split} slices over {len(report.cases)} case(s): "
        f"mean Dice {report.aggregate.mean:.4f}"
    )
    return report
