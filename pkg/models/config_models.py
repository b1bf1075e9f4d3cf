"""
Configuration models for architecture, training and full runs.

These Pydantic models validate every knob before any tensor is allocated.
Each section forbids unknown keys.
"""

import json
from pathlib import Path
from typing import List, Literal, Optional, Tuple, Union

from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from utils.errors import ConfigError


def scaled_channels(channels: int, width_multiplier: float, divisor: int) -> int:
    """Scale a channel count and round it to the nearest positive multiple of `divisor`."""
    return max(divisor, divisor * int(round(channels * width_multiplier / divisor)))


class XceptionConfig(BaseModel):
    """Concrete (already scaled) channel widths of the Xception encoder."""

    model_config = ConfigDict(extra="forbid")

    in_channels: int = Field(default=3, ge=1, description="Input image channels (T1CE, T2, FLAIR)")
    stem_channels: int = Field(default=32, ge=1, description="Width of the two stem convolutions (tap f1)")
    block_channels: List[int] = Field(
        default_factory=lambda: [128, 256, 728], description="Entry block widths (taps f2, f3, f4)"
    )
    middle_repeats: int = Field(default=8, ge=1, description="Number of middle-flow blocks")
    exit_channels: List[int] = Field(
        default_factory=lambda: [1024, 1536, 2048],
        description="Exit block width, then the two separable-ReLU widths (bottleneck)",
    )
    width_multiplier: float = Field(default=1.0, gt=0, description="Scale applied to produce these widths")
    attention_reduction: int = Field(default=8, ge=1, description="Divisor every tap width must honour")

    @model_validator(mode="after")
    def _check_widths(self) -> "XceptionConfig":
        if len(self.block_channels) != 3:
            raise ValueError("block_channels must list exactly 3 widths")
        if len(self.exit_channels) != 3:
            raise ValueError("exit_channels must list exactly 3 widths")
        r = self.attention_reduction
        for width in [self.stem_channels, *self.block_channels]:
            if width % r:
                raise ValueError(f"tap width {width} is not divisible by attention reduction {r}")
        return self

    @property
    def tap_channels(self) -> Tuple[int, int, int, int]:
        return (self.stem_channels, *self.block_channels)  # type: ignore[return-value]

    @property
    def bottleneck_channels(self) -> int:
        return self.exit_channels[-1]


class ModelConfig(BaseModel):
    """Architectural hyperparameters of AXUNet (unscaled canonical widths + multiplier)."""

    model_config = ConfigDict(extra="forbid")

    width_multiplier: float = Field(default=1.0, gt=0, description="Shrinks every width for desk-scale runs")
    middle_repeats: int = Field(default=8, ge=1, description="Middle-flow Xception blocks (canonical: 8)")
    attention_reduction: int = Field(default=8, ge=1, description="PAM projection divisor r (C -> C/r)")
    combine_mode: Literal["concat", "add"] = Field(
        default="concat", description="How a DeBlock output joins its attended skip"
    )
    attention_enabled: bool = Field(default=True, description="False gives the Xception-UNet ablation")
    stem_channels: int = Field(default=32, ge=1, description="Canonical stem width before scaling")
    block_channels: List[int] = Field(default_factory=lambda: [128, 256, 728], description="Canonical entry widths")
    exit_channels: List[int] = Field(
        default_factory=lambda: [1024, 1536, 2048], description="Canonical exit widths"
    )
    in_channels: int = Field(default=3, ge=1, description="Input channels")
    num_regions: int = Field(default=3, ge=1, description="Output logit channels (WT, TC, ET)")
    input_size: int = Field(default=224, ge=32, description="Square input side; multiple of 32")

    @field_validator("input_size")
    @classmethod
    def _divisible_by_32(cls, value: int) -> int:
        if value % 32:
            raise ValueError(f"input_size {value} is not divisible by 32")
        return value

    def backbone(self) -> XceptionConfig:
        """Derive the scaled encoder widths."""
        r, wm = self.attention_reduction, self.width_multiplier
        return XceptionConfig(
            in_channels=self.in_channels,
            stem_channels=scaled_channels(self.stem_channels, wm, r),
            block_channels=[scaled_channels(c, wm, r) for c in self.block_channels],
            middle_repeats=self.middle_repeats,
            exit_channels=[scaled_channels(c, wm, r) for c in self.exit_channels],
            width_multiplier=wm,
            attention_reduction=r,
        )


class DataSection(BaseModel):
    model_config = ConfigDict(extra="forbid")

    root: str = Field(default="dataset", description="Dataset root: <root>/<case_id>/{t1ce,t2,flair,seg}.axtn")
    cache_dir: str = Field(default="slices", description="Preprocessed slice cache directory")
    manifest_path: str = Field(default="split_manifest.json", description="Split manifest JSON path")
    fixed_crop: Optional[Tuple[int, int]] = Field(
        default=None, description="Fixed (h, w) crop around the brain box, e.g. [128, 164]; null = tight box"
    )
    tumor_threshold: float = Field(default=0.007, ge=0.0, le=1.0, description="Minimum tumour pixel fraction per slice")
    image_size: int = Field(default=224, ge=32, description="Side of the resized square slices")
    split_fractions: Tuple[float, float, float] = Field(
        default=(0.8, 0.1, 0.1), description="Train/val/test case fractions"
    )

    @field_validator("split_fractions")
    @classmethod
    def _fractions_sum_to_one(cls, value: Tuple[float, float, float]) -> Tuple[float, float, float]:
        if any(f < 0 for f in value) or abs(sum(value) - 1.0) > 1e-9:
            raise ValueError(f"split fractions {value} must be non-negative and sum to 1")
        return value


class TrainSection(BaseModel):
    model_config = ConfigDict(extra="forbid")

    lr0: float = Field(default=1e-4, gt=0, description="Initial learning rate")
    epochs: int = Field(default=40, ge=1, description="Training epochs")
    batch_size: int = Field(default=8, ge=1, description="Minibatch size (full-scale runs use 64)")
    seed: int = Field(default=0, ge=0, description="Run seed; every stochastic choice derives from it")
    smooth_eps: float = Field(default=1e-6, gt=0, description="Dice smoothing added to numerator and denominator")
    augment: bool = Field(default=True, description="Apply on-the-fly paired augmentation")
    beta1: float = Field(default=0.9, ge=0, lt=1, description="Adam first-moment decay")
    beta2: float = Field(default=0.999, ge=0, lt=1, description="Adam second-moment decay")
    adam_eps: float = Field(default=1e-8, gt=0, description="Adam denominator epsilon")
    mask_threshold: float = Field(default=0.5, gt=0, lt=1, description="Sigmoid threshold for binary masks")


class TrainConfig(TrainSection):
    """Training hyperparameters plus where to persist checkpoints."""

    checkpoint_dir: Optional[str] = Field(default=None, description="Best-checkpoint directory; None keeps it in memory")


class IOSection(BaseModel):
    model_config = ConfigDict(extra="forbid")

    checkpoint_dir: str = Field(default="checkpoints", description="Checkpoint directory")
    report_path: str = Field(default="report.json", description="Evaluation report JSON path")


class RunConfig(BaseModel):
    """Whole-run JSON document: data, model, train and io sections."""

    model_config = ConfigDict(extra="forbid")

    data: DataSection = Field(default_factory=DataSection)
    model: ModelConfig = Field(default_factory=ModelConfig)
    train: TrainSection = Field(default_factory=TrainSection)
    io: IOSection = Field(default_factory=IOSection)

    @model_validator(mode="after")
    def _sizes_agree(self) -> "RunConfig":
        if self.model.input_size != self.data.image_size:
            raise ValueError(
                f"model.input_size {self.model.input_size} differs from data.image_size {self.data.image_size}"
            )
        return self

    def train_config(self) -> TrainConfig:
        return TrainConfig(**self.train.model_dump(), checkpoint_dir=self.io.checkpoint_dir)

    @classmethod
    def from_file(cls, path: Union[str, Path]) -> "RunConfig":
        """
        Load and validate a run config JSON file.

        Raises:
            ConfigError: If the file is missing, not JSON, or fails validation
        """
        path = Path(path)
        try:
            return cls.model_validate(json.loads(path.read_text(encoding="utf-8")))
        except FileNotFoundError as e:
            raise ConfigError(f"config file not found: {path}") from e
        except json.JSONDecodeError as e:
            raise ConfigError(f"config {path} is not valid JSON: {e}") from e
        except ValidationError as e:
            raise ConfigError(f"config {path} is invalid: {e}") from e
