"""
Slice preprocessing: tumour-fraction slice selection, brain cropping, per-slice
min-max normalisation, region composition and resizing.

Order per case: select -> crop -> normalize -> compose -> resize.
"""

from typing import List, Optional, Sequence, Tuple

import numpy as np
from scipy import ndimage

from models.data_models import LABEL_VALUES, RegionMask, SlicePair, VolumeMeta, VolumeSample
from utils.errors import DataError
from utils.logger import setup_logger

logger = setup_logger(__name__)

DEFAULT_TUMOR_THRESHOLD = 0.007
DEFAULT_SIZE = (224, 224)


def select_slices(v: VolumeSample, threshold: float = DEFAULT_TUMOR_THRESHOLD) -> List[int]:
    """
    Axial slices whose tumour pixel fraction reaches `threshold`.

    The denominator is the full slice area before any cropping.

    Args:
        v: Volume
        threshold: Minimum fraction of non-zero labels, in [0, 1]

    Returns:
        Retained slice indices in ascending order (possibly empty)
    """
    if not 0.0 <= threshold <= 1.0:
        raise DataError(f"tumour threshold {threshold} outside [0, 1]")
    h, w, _ = v.spatial_shape
    fractions = (v.labels != 0).sum(axis=(0, 1)) / float(h * w)
    return [int(k) for k in np.flatnonzero(fractions >= threshold)]


def _window(arr: np.ndarray, axis: int, start: int, stop: int) -> np.ndarray:
    """Slice [start, stop) along `axis`, zero-padding where the range leaves the array."""
    size = arr.shape[axis]
    before, after = max(0, -start), max(0, stop - size)
    if before or after:
        pad = [(0, 0)] * arr.ndim
        pad[axis] = (before, after)
        arr = np.pad(arr, pad)
    index = [slice(None)] * arr.ndim
    index[axis] = slice(start + before, stop + before)
    return arr[tuple(index)]


def _centered(start: int, stop: int, target: Optional[int]) -> Tuple[int, int]:
    if target is None:
        return start, stop
    start = start + ((stop - start) - target) // 2
    return start, start + target


def crop_to_brain(v: VolumeSample, fixed: Optional[Tuple[int, int]] = None) -> VolumeSample:
    """
    Crop rows/columns to the brain bounding box.

    The box covers non-zero voxels of any channel over the retained slices
    (all slices when none are recorded). With `fixed`, the box is centre-padded
    or centre-cropped to exactly (h, w).

    Args:
        v: Volume
        fixed: Optional target (h, w)

    Returns:
        Cropped VolumeSample with the crop rectangle recorded in meta

    Raises:
        DataError: If the volume holds no brain voxels
    """
    brain = (v.channels != 0).any(axis=0)
    retained = v.meta.retained_slices
    if retained:
        brain = brain[:, :, retained]
    rows = np.flatnonzero(brain.any(axis=(1, 2)))
    cols = np.flatnonzero(brain.any(axis=(0, 2)))
    if rows.size == 0 or cols.size == 0:
        raise DataError(f"case {v.case_id}: no brain voxels")

    r0, r1 = _centered(int(rows[0]), int(rows[-1]) + 1, fixed[0] if fixed else None)
    c0, c1 = _centered(int(cols[0]), int(cols[-1]) + 1, fixed[1] if fixed else None)

    channels = _window(_window(v.channels, 1, r0, r1), 2, c0, c1)
    labels = _window(_window(v.labels, 0, r0, r1), 1, c0, c1)
    meta = VolumeMeta(
        crop_rect=(r0, r1, c0, c1),
        retained_slices=retained,
        source_shape=v.meta.source_shape or v.spatial_shape,
    )
    logger.debug(f"Cropped {v.case_id} to rows {r0}:{r1} cols {c0}:{c1}")
    return VolumeSample(case_id=v.case_id, channels=channels, labels=labels, meta=meta)


def minmax_normalize(slice_channel: np.ndarray) -> np.ndarray:
    """(x − min) / (max − min); a constant input maps to zeros."""
    x = np.asarray(slice_channel, dtype=np.float64)
    lo, hi = x.min(), x.max()
    if hi == lo:
        return np.zeros(x.shape, dtype=np.float32)
    return ((x - lo) / (hi - lo)).astype(np.float32)


def compose_regions(labels_slice: np.ndarray) -> RegionMask:
    """
    Raw labels -> nested regions: ET = {4}, TC = {1, 4}, WT = {1, 2, 4}.

    Raises:
        DataError: Naming any label outside {0, 1, 2, 4}
    """
    labels = np.asarray(labels_slice)
    unknown = np.setdiff1d(np.unique(labels), LABEL_VALUES)
    if unknown.size:
        raise DataError(f"unknown label value(s): {', '.join(str(v) for v in unknown.tolist())}")
    et = labels == 4
    tc = et | (labels == 1)
    wt = tc | (labels == 2)
    return RegionMask(wt=wt, tc=tc, et=et)


def resample_plane(plane: np.ndarray, out_shape: Sequence[int], order: int) -> np.ndarray:
    """
    Resample a 2-D plane with pixel-centre alignment.

    order=1 is bilinear, order=0 nearest neighbour; edges clamp.
    """
    h, w = plane.shape
    oh, ow = int(out_shape[0]), int(out_shape[1])
    rows = (np.arange(oh) + 0.5) * (h / oh) - 0.5
    cols = (np.arange(ow) + 0.5) * (w / ow) - 0.5
    grid = np.meshgrid(rows, cols, indexing="ij")
    return ndimage.map_coordinates(np.asarray(plane, dtype=np.float64), grid, order=order, mode="nearest")


def resize(image: np.ndarray, mask: RegionMask, to: Tuple[int, int] = DEFAULT_SIZE) -> SlicePair:
    """
    Resize an image (bilinear) and its mask (nearest neighbour) to `to`.

    Args:
        image: [3, h, w] in [0, 1]
        mask: Region planes [h, w]
        to: Target (H, W)

    Returns:
        SlicePair at the target size; nesting is re-validated
    """
    resized = np.stack([resample_plane(c, to, order=1) for c in image])
    resized = np.clip(resized, 0.0, 1.0).astype(np.float32)
    planes = [resample_plane(p.astype(np.float64), to, order=0) > 0.5 for p in (mask.wt, mask.tc, mask.et)]
    return SlicePair(image=resized, mask=RegionMask(wt=planes[0], tc=planes[1], et=planes[2]))


def preprocess_volume(
    v: VolumeSample,
    threshold: float = DEFAULT_TUMOR_THRESHOLD,
    fixed_crop: Optional[Tuple[int, int]] = None,
    size: Tuple[int, int] = DEFAULT_SIZE,
) -> List[SlicePair]:
    """
    Full per-case preprocessing.

    Args:
        v: Raw volume
        threshold: Tumour fraction for slice selection
        fixed_crop: Optional fixed (h, w) crop
        size: Output slice size

    Returns:
        One SlicePair per retained slice, in slice order
    """
    retained = select_slices(v, threshold)
    if not retained:
        logger.warning(f"Case {v.case_id}: no slice reaches tumour fraction {threshold}")
        return []
    selected = v.model_copy(update={"meta": VolumeMeta(retained_slices=retained, source_shape=v.spatial_shape)})
    cropped = crop_to_brain(selected, fixed_crop)

    pairs: List[SlicePair] = []
    for k in retained:
        image = np.stack([minmax_normalize(cropped.channels[c, :, :, k]) for c in range(cropped.channels.shape[0])])
        mask = compose_regions(cropped.labels[:, :, k])
        pair = resize(image, mask, to=size)
        pairs.append(pair.model_copy(update={"case_id": v.case_id, "slice_index": k}))
    logger.debug(f"Case {v.case_id}: {len(pairs)} slices kept of {v.spatial_shape[2]}")
    return pairs
