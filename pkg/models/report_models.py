"""
Data models for evaluation reports, training history and checkpoint manifests.
"""

from pathlib import Path
from typing import Dict, List, Optional, Union

from pydantic import BaseModel, Field

from models.config_models import DataSection, ModelConfig, TrainConfig

# Published AXUNet row (Dice ×100) shown next to measured scores
REFERENCE_ROW = {"WT": 92.59, "TC": 86.81, "ET": 84.89, "Mean": 93.73}


class RegionDice(BaseModel):
    """Dice per region plus their arithmetic mean, each in [0, 1]."""

    wt: float = Field(ge=0.0, le=1.0, description="Whole tumour Dice")
    tc: float = Field(ge=0.0, le=1.0, description="Tumour core Dice")
    et: float = Field(ge=0.0, le=1.0, description="Enhancing tumour Dice")
    mean: float = Field(ge=0.0, le=1.0, description="Mean of the three region scores")

    @classmethod
    def from_scores(cls, wt: float, tc: float, et: float) -> "RegionDice":
        return cls(wt=wt, tc=tc, et=et, mean=(wt + tc + et) / 3.0)

    def as_percent(self) -> Dict[str, float]:
        return {"WT": 100 * self.wt, "TC": 100 * self.tc, "ET": 100 * self.et, "Mean": 100 * self.mean}


class CaseReport(BaseModel):
    case_id: str
    slices: int = Field(ge=1, description="Slices pooled for this case")
    dice: RegionDice


class EvalReport(BaseModel):
    """Per-case and aggregate Dice for one partition."""

    split: str = Field(description="Partition the report was computed on")
    cases: List[CaseReport] = Field(default_factory=list)
    aggregate: RegionDice = Field(description="Per-region mean over cases")
    slices: int = Field(ge=0, description="Total slices evaluated")

    def to_table(self, label: str = "AXUNet (measured)") -> str:
        """
        Render the Dice table (×100) with the published reference row.

        Returns:
            Box-drawn table as a string
        """
        width = 64
        measured = self.aggregate.as_percent()
        rows = [(label, measured), ("AXUNet (published)", REFERENCE_ROW)]

        output = [f"DICE SCORES - {self.split} split ({len(self.cases)} cases, {self.slices} slices)"]
        output.append("┌" + "─" * width + "┐")
        output.append(f"│ {'Model':<22} │ {'WT':>7} │ {'TC':>7} │ {'ET':>7} │ {'Mean':>7} │")
        output.append("├" + "─" * width + "┤")
        for name, scores in rows:
            output.append(
                f"│ {name[:22]:<22} │ {scores['WT']:>7.2f} │ {scores['TC']:>7.2f} │ "
                f"{scores['ET']:>7.2f} │ {scores['Mean']:>7.2f} │"
            )
        output.append("└" + "─" * width + "┘")
        return "\n".join(output)

    def save_json(self, path: Union[str, Path]) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(self.model_dump_json(indent=2), encoding="utf-8")
        return path


class EpochRecord(BaseModel):
    epoch: int = Field(ge=0)
    lr: float = Field(ge=0.0, description="Learning rate used during the epoch")
    train_loss: float = Field(description="Mean minibatch loss")
    val_dice: Optional[float] = Field(default=None, description="Mean validation Dice after the epoch")


class CheckpointManifest(BaseModel):
    """manifest.json of a checkpoint directory."""

    format_version: int = Field(default=1)
    model: ModelConfig
    train: TrainConfig
    data: Optional[DataSection] = Field(default=None, description="Data settings the model was trained with")
    epoch: int = Field(ge=0, description="Epoch the weights were taken after")
    best_val_dice: float = Field(description="Validation Dice at that epoch")
    dtype: str = Field(default="float32", description="Parameter dtype")
    parameters: List[str] = Field(description="Dotted parameter names; params/<name>.axtn")
    history: List[EpochRecord] = Field(default_factory=list)
