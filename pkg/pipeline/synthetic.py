"""
Synthetic multi-sequence volumes for desk-scale runs.

Each case is an ellipsoidal "brain" holding a tumour built from three nested,
noise-perturbed ellipsoids: edema (label 2) around necrotic core (label 1)
around enhancing tumour (label 4). Every sequence gets its own tumour
contrast, the way edema lights up FLAIR and enhancing tissue lights up T1CE.
"""

from pathlib import Path
from typing import List, Sequence, Tuple, Union

import numpy as np
from scipy import ndimage

from models.data_models import CaseStats, SEQUENCES, VolumeSample
from pipeline.volumes import save_volume
from utils.errors import ConfigError
from utils.logger import setup_logger
from utils.rng import make_rng

logger = setup_logger(__name__)

MIN_SIDE = 16
INTENSITY_SCALE = 1000.0

# per-sequence (t1ce, t2, flair) intensity offsets
_TISSUE = np.array([0.45, 0.40, 0.35])
_CONTRAST = {
    2: np.array([0.00, 0.35, 0.45]),
    1: np.array([-0.15, 0.25, 0.00]),
    4: np.array([0.45, 0.10, 0.15]),
}
# (label, in-plane radius as a fraction of the smaller side, axial radius as a fraction of D)
_TUMOUR_SHELLS = ((2, 0.18, 0.22), (1, 0.11, 0.14), (4, 0.06, 0.08))


def _smooth_noise(rng: np.random.Generator, shape: Tuple[int, int, int]) -> np.ndarray:
    sigma = max(1.0, min(shape) / 16.0)
    field = ndimage.gaussian_filter(rng.standard_normal(shape), sigma=sigma)
    std = field.std()
    return field / std if std > 0 else field


def _radial(shape: Tuple[int, int, int], center: Sequence[float], radii: Sequence[float]) -> np.ndarray:
    """Normalised ellipsoid distance: < 1 inside, 1 on the surface."""
    grids = np.ogrid[: shape[0], : shape[1], : shape[2]]
    return np.sqrt(sum(((g - c) / r) ** 2 for g, c, r in zip(grids, center, radii)))


def synth_volume(case_id: str, dims: Tuple[int, int, int], rng: np.random.Generator) -> VolumeSample:
    """
    Generate one synthetic case in memory.

    Args:
        case_id: Identifier stored on the sample
        dims: (H, W, D), each at least 16
        rng: Generator owning every draw for this case

    Returns:
        VolumeSample with channels [3, H, W, D] and labels in {0, 1, 2, 4}
    """
    h, w, d = dims
    if min(dims) < MIN_SIDE:
        raise ConfigError(f"synthetic dims {h}x{w}x{d} too small for nested regions (minimum {MIN_SIDE} per axis)")

    center = np.array([(h - 1) / 2.0, (w - 1) / 2.0, (d - 1) / 2.0])
    brain_radii = np.array([0.40 * h, 0.42 * w, 0.40 * d]) * rng.uniform(0.95, 1.05, size=3)
    brain = _radial(dims, center, brain_radii) < 1.0

    side = min(h, w)
    offset = rng.uniform(-0.08, 0.08, size=2) * np.array([h, w])
    tumour_center = (center[0] + offset[0], center[1] + offset[1], float(d // 2))
    labels = np.zeros(dims, dtype=np.int16)
    for label, plane_frac, axial_frac in _TUMOUR_SHELLS:
        radii = (plane_frac * side, plane_frac * side, max(1.5, axial_frac * d))
        dist = _radial(dims, tumour_center, radii) + 0.08 * _smooth_noise(rng, dims)
        labels[(dist < 1.0) & brain] = label

    tissue = _smooth_noise(rng, dims)
    channels = np.empty((len(SEQUENCES), h, w, d), dtype=np.float32)
    for c in range(len(SEQUENCES)):
        value = _TISSUE[c] + 0.05 * tissue + 0.02 * rng.standard_normal(dims)
        for label, contrast in _CONTRAST.items():
            value = value + contrast[c] * (labels == label)
        value = np.maximum(value, 0.01) * INTENSITY_SCALE
        channels[c] = np.where(brain, value, 0.0)

    return VolumeSample(case_id=case_id, channels=channels, labels=labels)


def case_stats(sample: VolumeSample) -> CaseStats:
    labels = sample.labels
    h, w, d = sample.spatial_shape
    central = labels[:, :, d // 2]
    return CaseStats(
        case_id=sample.case_id,
        shape=sample.spatial_shape,
        label_voxels={"PE": int((labels == 2).sum()), "NCR": int((labels == 1).sum()), "ET": int((labels == 4).sum())},
        central_tumor_fraction=float((central != 0).sum()) / float(h * w),
    )


def synth_generate(
    n_cases: int,
    dims: Tuple[int, int, int],
    seed: int,
    out_dir: Union[str, Path],
) -> List[CaseStats]:
    """
    Write a synthetic dataset in the standard case layout.

    Cases are named SYN_00000, SYN_00001, ... and each draws from its own
    seeded stream, so a rerun with the same seed writes identical bytes.

    Args:
        n_cases: Number of cases (≥ 1)
        dims: (H, W, D) volume shape
        seed: Run seed
        out_dir: Dataset root

    Returns:
        Per-case statistics in case order

    Raises:
        ConfigError: On a non-positive case count or dims below 16
    """
    if n_cases < 1:
        raise ConfigError(f"case count must be at least 1, got {n_cases}")
    if min(dims) < MIN_SIDE:
        raise ConfigError(f"synthetic dims {dims} too small for nested regions (minimum {MIN_SIDE} per axis)")

    out_dir = Path(out_dir)
    stats: List[CaseStats] = []
    for index in range(n_cases):
        sample = synth_volume(f"SYN_{index:05d}", tuple(dims), make_rng(seed, "synth", index))
        save_volume(out_dir, sample)
        stats.append(case_stats(sample))
        logger.debug(f"Wrote {sample.case_id}: central tumour fraction {stats[-1].central_tumor_fraction:.4f}")
    logger.info(f"Generated {n_cases} synthetic cases of {dims[0]}x{dims[1]}x{dims[2]} under {out_dir}")
    return stats
