"""
Case-level train/val/test partitioning.

Splitting happens on case ids, never on slices, so no case contributes
slices to more than one partition.
"""

import math
from pathlib import Path
from typing import Sequence, Tuple, Union

from models.data_models import SplitManifest
from utils.errors import ConfigError, DataError
from utils.logger import setup_logger
from utils.rng import make_rng

logger = setup_logger(__name__)


def _check_fractions(fractions: Sequence[float]) -> Tuple[float, float, float]:
    if len(fractions) != 3:
        raise ConfigError(f"split fractions need 3 values, got {len(fractions)}")
    if any(f < 0 for f in fractions) or abs(sum(fractions) - 1.0) > 1e-9:
        raise ConfigError(f"split fractions {tuple(fractions)} must be non-negative and sum to 1")
    return tuple(float(f) for f in fractions)  # type: ignore[return-value]


def split_cases(
    case_ids: Sequence[str],
    fractions: Sequence[float] = (0.8, 0.1, 0.1),
    seed: int = 0,
) -> SplitManifest:
    """
    Shuffle case ids with a seeded RNG and cut them into train/val/test.

    Train and val sizes are floor(fraction · n); the remainder goes to test.
    The shuffle starts from the sorted ids, so the result does not depend on
    the order the ids were listed in.

    Args:
        case_ids: Unique case identifiers
        fractions: Train/val/test fractions summing to 1
        seed: Run seed

    Returns:
        SplitManifest with disjoint partitions covering every case

    Raises:
        ConfigError: On invalid fractions
        DataError: On duplicate case ids
    """
    fractions = _check_fractions(fractions)
    ids = sorted(case_ids)
    if len(set(ids)) != len(ids):
        raise DataError("duplicate case ids in split input")

    order = make_rng(seed, "split").permutation(len(ids))
    shuffled = [ids[i] for i in order]
    n = len(shuffled)
    n_train = math.floor(fractions[0] * n + 1e-9)
    n_val = math.floor(fractions[1] * n + 1e-9)

    manifest = SplitManifest(
        seed=seed,
        fractions=fractions,
        train=shuffled[:n_train],
        val=shuffled[n_train : n_train + n_val],
        test=shuffled[n_train + n_val :],
    )
    logger.info(f"Split {n} cases: train={len(manifest.train)} val={len(manifest.val)} test={len(manifest.test)}")
    return manifest


def save_manifest(manifest: SplitManifest, path: Union[str, Path]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(manifest.model_dump_json(indent=2), encoding="utf-8")
    return path


def load_manifest(path: Union[str, Path]) -> SplitManifest:
    """
    Read a split manifest.

    Raises:
        DataError: If the file is missing or malformed
    """
    path = Path(path)
    if not path.is_file():
        raise DataError(f"split manifest not found: {path}")
    try:
        return SplitManifest.model_validate_json(path.read_text(encoding="utf-8"))
    except ValueError as e:
        raise DataError(f"split manifest {path} is invalid: {e}") from e
