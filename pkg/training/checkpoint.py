"""
Checkpoint persistence.

Layout:
    <dir>/manifest.json          CheckpointManifest (configs, epoch, score, names, history)
    <dir>/params/<name>.axtn     one AXTN tensor per dotted parameter name
"""

from pathlib import Path
from typing import Dict, List, Optional, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, ValidationError

from models.config_models import DataSection, ModelConfig, TrainConfig
from models.report_models import CheckpointManifest, EpochRecord
from network.decoder import AXUNet
from tools.tensor_io import read_tensor, write_tensor
from utils.errors import ConfigError, DataError
from utils.logger import setup_logger
from utils.rng import make_rng

logger = setup_logger(__name__)

MANIFEST_NAME = "manifest.json"
PARAMS_DIR = "params"


class Checkpoint(BaseModel):
    """Weights plus everything needed to rebuild the network they belong to."""

    model_config = ConfigDict(arbitrary_types_allowed=True)

    architecture: ModelConfig = Field(description="Network configuration the weights belong to")
    train: TrainConfig
    data: Optional[DataSection] = None
    epoch: int = Field(ge=0)
    best_val_dice: float
    state: Dict[str, np.ndarray] = Field(description="Dotted parameter name -> array")
    history: List[EpochRecord] = Field(default_factory=list)

    def build_model(self) -> AXUNet:
        """Instantiate the network and load these weights into it."""
        dtype = next(iter(self.state.values())).dtype if self.state else np.float32
        model = AXUNet(self.architecture, make_rng(self.train.seed, "init"), dtype=dtype)
        model.load_state_dict(self.state)
        return model


def save_checkpoint(checkpoint: Checkpoint, directory: Union[str, Path]) -> Path:
    """
    Write a checkpoint directory, replacing any previous parameter files.

    Returns:
        Path of the written manifest
    """
    directory = Path(directory)
    params_dir = directory / PARAMS_DIR
    if params_dir.is_dir():
        for stale in params_dir.glob("*.axtn"):
            stale.unlink()
    for name, array in checkpoint.state.items():
        write_tensor(params_dir / f"{name}.axtn", array)

    dtype = next(iter(checkpoint.state.values())).dtype if checkpoint.state else np.dtype(np.float32)
    manifest = CheckpointManifest(
        model=checkpoint.architecture,
        train=checkpoint.train,
        data=checkpoint.data,
        epoch=checkpoint.epoch,
        best_val_dice=checkpoint.best_val_dice,
        dtype=np.dtype(dtype).name,
        parameters=list(checkpoint.state),
        history=checkpoint.history,
    )
    path = directory / MANIFEST_NAME
    path.write_text(manifest.model_dump_json(indent=2), encoding="utf-8")
    logger.info(f"Saved checkpoint (epoch {checkpoint.epoch}, val Dice {checkpoint.best_val_dice:.4f}) to {directory}")
    return path


def load_manifest(directory: Union[str, Path]) -> CheckpointManifest:
    """
    Read and validate a checkpoint manifest.

    Raises:
        ConfigError: If the checkpoint directory or manifest is missing or invalid
    """
    path = Path(directory) / MANIFEST_NAME
    if not path.is_file():
        raise ConfigError(f"checkpoint not found: {path}")
    try:
        return CheckpointManifest.model_validate_json(path.read_text(encoding="utf-8"))
    except ValidationError as e:
        raise ConfigError(f"checkpoint manifest {path} is invalid: {e}") from e


def load_checkpoint(directory: Union[str, Path]) -> Checkpoint:
    """
    Load a checkpoint directory.

    Raises:
        ConfigError: On a missing or invalid manifest
        DataError: If a listed parameter file is missing or unreadable
    """
    directory = Path(directory)
    manifest = load_manifest(directory)
    state: Dict[str, np.ndarray] = {}
    for name in manifest.parameters:
        path = directory / PARAMS_DIR / f"{name}.axtn"
        if not path.is_file():
            raise DataError(f"checkpoint {directory} is missing parameter file {path.name}")
        state[name] = read_tensor(path).astype(manifest.dtype)
    logger.info(f"Loaded checkpoint from {directory} (epoch {manifest.epoch}, {len(state)} tensors)")
    return Checkpoint(
        architecture=manifest.model,
        train=manifest.train,
        data=manifest.data,
        epoch=manifest.epoch,
        best_val_dice=manifest.best_val_dice,
        state=state,
        history=manifest.history,
    )
