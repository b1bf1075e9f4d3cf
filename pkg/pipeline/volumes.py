"""
Dataset volume I/O.

Layout: <root>/<case_id>/{t1ce,t2,flair,seg}.axtn, each a 3-D [H, W, D] AXTN
tensor; seg holds integer labels encoded as f32.
"""

from pathlib import Path
from typing import List, Union

import numpy as np
from pydantic import ValidationError

from models.data_models import SEQUENCES, VolumeSample
from tools.tensor_io import read_tensor, write_tensor
from utils.errors import DataError
from utils.logger import setup_logger

logger = setup_logger(__name__)

SEGMENTATION = "seg"


def list_cases(root: Union[str, Path]) -> List[str]:
    """Sorted case ids (sub-directories) under a dataset root."""
    root = Path(root)
    if not root.is_dir():
        raise DataError(f"dataset root not found: {root}")
    return sorted(p.name for p in root.iterdir() if p.is_dir())


def load_volume(root: Union[str, Path], case_id: str) -> VolumeSample:
    """
    Load one case from the dataset layout.

    Args:
        root: Dataset root
        case_id: Case directory name

    Returns:
        VolumeSample with channels stacked as T1CE, T2, FLAIR

    Raises:
        DataError: If sequences are missing (all listed) or inconsistent
    """
    case_dir = Path(root) / case_id
    missing = [name for name in (*SEQUENCES, SEGMENTATION) if not (case_dir / f"{name}.axtn").is_file()]
    if missing:
        raise DataError(f"case {case_id} is missing sequence(s): {', '.join(missing)}")

    channels = [read_tensor(case_dir / f"{name}.axtn").astype(np.float32) for name in SEQUENCES]
    labels = np.rint(read_tensor(case_dir / f"{SEGMENTATION}.axtn")).astype(np.int16)
    shapes = {c.shape for c in channels} | {labels.shape}
    if len(shapes) != 1:
        raise DataError(f"case {case_id} has inconsistent volume shapes: {sorted(shapes)}")
    try:
        return VolumeSample(case_id=case_id, channels=np.stack(channels), labels=labels)
    except ValidationError as e:
        raise DataError(f"case {case_id}: {e}") from e


def save_volume(root: Union[str, Path], sample: VolumeSample) -> Path:
    """Write a VolumeSample into the dataset layout and return its case directory."""
    case_dir = Path(root) / sample.case_id
    for index, name in enumerate(SEQUENCES):
        write_tensor(case_dir / f"{name}.axtn", sample.channels[index].astype(np.float32))
    write_tensor(case_dir / f"{SEGMENTATION}.axtn", sample.labels.astype(np.float32))
    return case_dir
