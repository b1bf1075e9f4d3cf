"""
Data models for volumes, slices and region masks.

These Pydantic models carry numpy arrays and validate the label taxonomy,
value ranges and the WT ⊇ TC ⊇ ET nesting wherever data changes hands.
"""

from typing import Dict, List, Optional, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator

REGIONS: Tuple[str, str, str] = ("WT", "TC", "ET")
SEQUENCES: Tuple[str, str, str] = ("t1ce", "t2", "flair")
LABEL_VALUES = (0, 1, 2, 4)


class VolumeMeta(BaseModel):
    """Provenance of a (possibly cropped) volume."""

    crop_rect: Optional[Tuple[int, int, int, int]] = Field(
        default=None, description="(row_start, row_stop, col_start, col_stop) in source voxel coordinates"
    )
    retained_slices: Optional[List[int]] = Field(
        default=None, description="Axial slice indices kept by tumour-fraction selection"
    )
    source_shape: Optional[Tuple[int, int, int]] = Field(default=None, description="H, W, D before cropping")


class VolumeSample(BaseModel):
    """One case: stacked T1CE/T2/FLAIR channels plus the integer label volume."""

    model_config = ConfigDict(arbitrary_types_allowed=True)

    case_id: str = Field(description="Case identifier")
    channels: np.ndarray = Field(description="Intensities [3, H, W, D] for T1CE, T2, FLAIR")
    labels: np.ndarray = Field(description="Labels [H, W, D] with values in {0, 1, 2, 4}")
    meta: VolumeMeta = Field(default_factory=VolumeMeta)

    @model_validator(mode="after")
    def _check_volume(self) -> "VolumeSample":
        if self.channels.ndim != 4 or self.channels.shape[0] != len(SEQUENCES):
            raise ValueError(f"channels must be [3, H, W, D], got {self.channels.shape}")
        if self.labels.shape != self.channels.shape[1:]:
            raise ValueError(f"labels {self.labels.shape} do not match channels {self.channels.shape[1:]}")
        unknown = np.setdiff1d(np.unique(self.labels), LABEL_VALUES)
        if unknown.size:
            raise ValueError(f"unknown label value(s) {unknown.tolist()} in case {self.case_id}")
        return self

    @property
    def spatial_shape(self) -> Tuple[int, int, int]:
        return tuple(self.labels.shape)  # type: ignore[return-value]


class RegionMask(BaseModel):
    """Binary WT/TC/ET planes with et ≤ tc ≤ wt."""

    model_config = ConfigDict(arbitrary_types_allowed=True)

    wt: np.ndarray = Field(description="Whole tumour plane")
    tc: np.ndarray = Field(description="Tumour core plane")
    et: np.ndarray = Field(description="Enhancing tumour plane")

    def __init__(self, enforce_nesting: bool = False, **data):
        if enforce_nesting:
            wt = np.asarray(data["wt"]).astype(bool)
            tc = np.asarray(data["tc"]).astype(bool) & wt
            et = np.asarray(data["et"]).astype(bool) & tc
            data = {"wt": wt, "tc": tc, "et": et}
        super().__init__(**data)

    @model_validator(mode="after")
    def _check_nesting(self) -> "RegionMask":
        planes = [np.asarray(p) for p in (self.wt, self.tc, self.et)]
        if not all(p.shape == planes[0].shape and p.ndim == 2 for p in planes):
            raise ValueError(f"region planes must share one 2-D shape, got {[p.shape for p in planes]}")
        for name, plane in zip(REGIONS, planes):
            if not np.isin(plane, (0, 1)).all():
                raise ValueError(f"{name} plane is not binary")
        wt, tc, et = (p.astype(bool) for p in planes)
        if (tc & ~wt).any() or (et & ~tc).any():
            raise ValueError("region nesting violated: expected ET ⊆ TC ⊆ WT")
        self.wt, self.tc, self.et = wt, tc, et
        return self

    @classmethod
    def from_stack(cls, stack: np.ndarray, enforce_nesting: bool = False) -> "RegionMask":
        """Build from a [3, H, W] array ordered WT, TC, ET."""
        stack = np.asarray(stack)
        if stack.ndim != 3 or stack.shape[0] != 3:
            raise ValueError(f"mask stack must be [3, H, W], got {stack.shape}")
        return cls(wt=stack[0], tc=stack[1], et=stack[2], enforce_nesting=enforce_nesting)

    def stack(self, dtype=np.float32) -> np.ndarray:
        return np.stack([self.wt, self.tc, self.et]).astype(dtype)

    def counts(self) -> Dict[str, int]:
        return {name: int(plane.sum()) for name, plane in zip(REGIONS, (self.wt, self.tc, self.et))}

    @property
    def shape(self) -> Tuple[int, int]:
        return tuple(self.wt.shape)  # type: ignore[return-value]


class SlicePair(BaseModel):
    """A model-ready slice: image in [0, 1] and its region mask."""

    model_config = ConfigDict(arbitrary_types_allowed=True)

    image: np.ndarray = Field(description="Image [3, S, S] in [0, 1]")
    mask: RegionMask = Field(description="WT/TC/ET planes [S, S]")
    case_id: str = Field(default="", description="Source case")
    slice_index: int = Field(default=-1, description="Axial index in the source volume")

    @model_validator(mode="after")
    def _check_pair(self) -> "SlicePair":
        if self.image.ndim != 3 or self.image.shape[0] != 3:
            raise ValueError(f"image must be [3, H, W], got {self.image.shape}")
        if self.image.shape[1:] != self.mask.shape:
            raise ValueError(f"image {self.image.shape[1:]} and mask {self.mask.shape} differ")
        if self.image.size and (self.image.min() < 0.0 or self.image.max() > 1.0):
            raise ValueError("image values must lie in [0, 1]")
        return self


class SplitManifest(BaseModel):
    """Case-level train/val/test partition, persisted as JSON."""

    seed: int = Field(description="Seed the shuffle was drawn with")
    fractions: Tuple[float, float, float] = Field(description="Requested train/val/test fractions")
    train: List[str] = Field(default_factory=list)
    val: List[str] = Field(default_factory=list)
    test: List[str] = Field(default_factory=list)
    slice_counts: Dict[str, int] = Field(default_factory=dict, description="Cached slices per partition")

    def partition(self, name: str) -> List[str]:
        if name not in ("train", "val", "test"):
            raise ValueError(f"unknown partition {name!r}")
        return list(getattr(self, name))


class CaseStats(BaseModel):
    """Per-case summary printed by the synthetic generator."""

    case_id: str
    shape: Tuple[int, int, int]
    label_voxels: Dict[str, int] = Field(description="Voxel count per raw label (PE, NCR, ET)")
    central_tumor_fraction: float = Field(description="Tumour pixel fraction of the central axial slice")
