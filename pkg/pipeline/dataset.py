"""
Preprocessed slice cache and the in-memory slice dataset.

Cache layout: one (img, msk) pair per retained axial slice k, sharing the stem
<case_id>_<k>.axtn:

    <cache_dir>/img/<case_id>_<k>.axtn   image [3, S, S]
    <cache_dir>/msk/<case_id>_<k>.axtn   WT/TC/ET planes [3, S, S]
"""

import re
from pathlib import Path
from typing import Iterator, List, Optional, Sequence, Tuple, Union

import numpy as np

from models.data_models import RegionMask, SlicePair
from pipeline.augmentation import AugmentationConfig, augment
from tools.tensor_io import read_tensor, write_tensor
from utils.errors import DataError
from utils.logger import setup_logger
from utils.rng import derive_seed, make_rng

logger = setup_logger(__name__)

IMAGE_DIR = "img"
MASK_DIR = "msk"


def _slice_paths(cache_dir: Path, case_id: str, k: int) -> Tuple[Path, Path]:
    stem = f"{case_id}_{k}.axtn"
    return cache_dir / IMAGE_DIR / stem, cache_dir / MASK_DIR / stem


def cached_slice_indices(cache_dir: Union[str, Path], case_id: str) -> List[int]:
    """Slice indices cached for a case, ascending."""
    pattern = re.compile(rf"^{re.escape(case_id)}_(\d+)\.axtn$")
    image_dir = Path(cache_dir) / IMAGE_DIR
    if not image_dir.is_dir():
        return []
    found = (pattern.match(p.name) for p in image_dir.iterdir())
    return sorted(int(m.group(1)) for m in found if m)


def write_case_slices(cache_dir: Union[str, Path], case_id: str, pairs: Sequence[SlicePair]) -> int:
    """
    Replace the cached slices of one case.

    Previously cached slices of the case are removed first, so a rerun with
    different settings never leaves stale pairs behind.

    Returns:
        Number of slice pairs written
    """
    cache_dir = Path(cache_dir)
    for k in cached_slice_indices(cache_dir, case_id):
        for path in _slice_paths(cache_dir, case_id, k):
            path.unlink(missing_ok=True)
    for pair in pairs:
        img_path, msk_path = _slice_paths(cache_dir, case_id, pair.slice_index)
        write_tensor(img_path, pair.image.astype(np.float32))
        write_tensor(msk_path, pair.mask.stack(np.float32))
    return len(pairs)


def read_case_slices(cache_dir: Union[str, Path], case_id: str) -> List[SlicePair]:
    cache_dir = Path(cache_dir)
    pairs = []
    for k in cached_slice_indices(cache_dir, case_id):
        img_path, msk_path = _slice_paths(cache_dir, case_id, k)
        image = read_tensor(img_path).astype(np.float32)
        mask = RegionMask.from_stack(read_tensor(msk_path) > 0.5)
        pairs.append(SlicePair(image=image, mask=mask, case_id=case_id, slice_index=k))
    return pairs


class SliceDataset:
    """
    Stacked slices of one partition.

    images: [N, 3, S, S] float32 in [0, 1]
    masks:  [N, 3, S, S] float32 in {0, 1}, channels WT, TC, ET
    """

    def __init__(
        self,
        images: np.ndarray,
        masks: np.ndarray,
        case_ids: Sequence[str],
        slice_indices: Optional[Sequence[int]] = None,
    ):
        if images.ndim != 4 or images.shape[1] != 3 or images.shape != masks.shape:
            raise DataError(f"dataset arrays must both be N×3×S×S, got {images.shape} and {masks.shape}")
        if len(case_ids) != images.shape[0]:
            raise DataError(f"{len(case_ids)} case ids for {images.shape[0]} slices")
        self.images = images.astype(np.float32, copy=False)
        self.masks = masks.astype(np.float32, copy=False)
        self.case_ids = list(case_ids)
        self.slice_indices = list(slice_indices) if slice_indices is not None else [-1] * len(self.case_ids)

    def __len__(self) -> int:
        return self.images.shape[0]

    @property
    def image_size(self) -> Tuple[int, int]:
        return tuple(self.images.shape[2:])  # type: ignore[return-value]

    def pair(self, index: int) -> SlicePair:
        return SlicePair(
            image=self.images[index],
            mask=RegionMask.from_stack(self.masks[index] > 0.5),
            case_id=self.case_ids[index],
            slice_index=self.slice_indices[index],
        )

    def subset(self, indices: Sequence[int]) -> "SliceDataset":
        idx = list(indices)
        return SliceDataset(
            self.images[idx],
            self.masks[idx],
            [self.case_ids[i] for i in idx],
            [self.slice_indices[i] for i in idx],
        )

    @classmethod
    def from_pairs(cls, pairs: Sequence[SlicePair]) -> "SliceDataset":
        if not pairs:
            raise DataError("cannot build a dataset from zero slices")
        return cls(
            np.stack([p.image for p in pairs]),
            np.stack([p.mask.stack(np.float32) for p in pairs]),
            [p.case_id for p in pairs],
            [p.slice_index for p in pairs],
        )

    @classmethod
    def from_cache(cls, cache_dir: Union[str, Path], case_ids: Sequence[str]) -> "SliceDataset":
        """
        Load every cached slice of the given cases.

        Raises:
            DataError: If none of the cases has cached slices
        """
        pairs: List[SlicePair] = []
        for case_id in case_ids:
            pairs.extend(read_case_slices(cache_dir, case_id))
        if not pairs:
            raise DataError(f"no cached slices under {cache_dir} for {len(case_ids)} case(s)")
        logger.info(f"Loaded {len(pairs)} slices from {len(case_ids)} case(s)")
        return cls.from_pairs(pairs)

    def batches(
        self,
        batch_size: int,
        epoch: int = 0,
        seed: int = 0,
        shuffle: bool = True,
        augment_config: Optional[AugmentationConfig] = None,
    ) -> Iterator[Tuple[np.ndarray, np.ndarray, List[int]]]:
        """
        Yield (images, masks, indices) minibatches.

        The order is a permutation seeded by (seed, epoch). With an
        augmentation config, sample i of epoch e is augmented with a seed
        derived from (seed, e, i), independent of batching and worker order.
        """
        order = make_rng(seed, "shuffle", epoch).permutation(len(self)) if shuffle else np.arange(len(self))
        for start in range(0, len(order), batch_size):
            idx = [int(i) for i in order[start : start + batch_size]]
            if augment_config is None:
                yield self.images[idx], self.masks[idx], idx
                continue
            augmented = [augment(self.pair(i), derive_seed(seed, "augment", epoch, i), augment_config) for i in idx]
            images = np.stack([p.image for p in augmented])
            masks = np.stack([p.mask.stack(np.float32) for p in augmented])
            yield images, masks, idx
