"""
Training, evaluation and inference workflows behind the CLI commands.

Each run_* function loads what it needs from disk (config, manifest, slice
cache, checkpoint), calls the corresponding library operation and persists
its outputs.
"""

from pathlib import Path
from typing import List, Optional, Tuple, Union

import numpy as np

from engine import Tensor, no_grad
from models.config_models import DataSection, RunConfig
from models.data_models import RegionMask, SlicePair
from models.report_models import EvalReport
from network.decoder import AXUNet, predict_masks
from pipeline.dataset import SliceDataset
from pipeline.splits import load_manifest
from tools.gradcam import GradCamRequest, Heatmap, gradcam
from tools.overlay import overlay, prediction_preview, write_ppm
from tools.tensor_io import read_tensor, write_tensor
from training.checkpoint import Checkpoint, load_checkpoint
from training.evaluator import evaluate
from training.trainer import train
from utils.errors import ConfigError, ShapeError
from utils.logger import setup_logger
from utils.rng import make_rng

logger = setup_logger(__name__)

PathLike = Union[str, Path]


def _partition(data: DataSection, name: str) -> Optional[SliceDataset]:
    manifest = load_manifest(data.manifest_path)
    case_ids = manifest.partition(name)
    if not case_ids:
        return None
    return SliceDataset.from_cache(data.cache_dir, case_ids)


def run_training(config: RunConfig) -> Checkpoint:
    """Train on the cached train partition, selecting on val, and write the best checkpoint."""
    logger.info(f"Starting training run (seed {config.train.seed})")
    try:
        train_set = _partition(config.data, "train")
        val_set = _partition(config.data, "val")
        model = AXUNet(config.model, make_rng(config.train.seed, "init"))
        return train(model, train_set, val_set, config.train_config(), data=config.data)
    except Exception as e:
        logger.error(f"Training run failed: {e}")
        raise


def run_evaluation(
    checkpoint_dir: PathLike,
    split: str = "test",
    config: Optional[RunConfig] = None,
) -> EvalReport:
    """
    Evaluate a checkpoint on one partition of the slice cache.

    The data settings come from `config` when given, otherwise from the
    checkpoint manifest.

    Raises:
        ConfigError: If `config` describes a different architecture than the checkpoint
    """
    checkpoint = load_checkpoint(checkpoint_dir)
    if config is not None and config.model != checkpoint.architecture:
        raise ConfigError(
            f"architecture mismatch: config model {config.model.model_dump()} differs from "
            f"checkpoint model {checkpoint.architecture.model_dump()}"
        )
    data = config.data if config is not None else (checkpoint.data or DataSection())
    dataset = _partition(data, split)
    model = checkpoint.build_model()
    report = evaluate(model, dataset, checkpoint.train.mask_threshold, split=split, batch_size=checkpoint.train.batch_size)
    report_path = Path(config.io.report_path) if config is not None else Path(checkpoint_dir) / f"report_{split}.json"
    report.save_json(report_path)
    logger.info(f"Report written to {report_path}")
    return report


def _load_images(input_path: PathLike) -> np.ndarray:
    images = read_tensor(input_path)
    if images.ndim == 3:
        images = images[None]
    if images.ndim != 4 or images.shape[1] != 3:
        raise ShapeError(f"input {input_path} must be [3, H, W] or [N, 3, H, W], got {images.shape}")
    return np.clip(images, 0.0, 1.0)


def run_prediction(checkpoint_dir: PathLike, input_path: PathLike, out_path: PathLike) -> Tuple[List[RegionMask], Path]:
    """
    Predict region masks for one or more slices.

    Writes the binary WT/TC/ET planes as an AXTN tensor [N, 3, H, W] at
    `out_path` and a colour preview of the first slice next to it (.ppm).

    Returns:
        Predicted masks and the preview path
    """
    checkpoint = load_checkpoint(checkpoint_dir)
    model = checkpoint.build_model()
    images = _load_images(input_path)
    dtype = model.parameters()[0].dtype
    with no_grad():
        logits = model(Tensor(images.astype(dtype)))
    masks = predict_masks(logits, checkpoint.train.mask_threshold)

    out_path = Path(out_path)
    write_tensor(out_path, np.stack([m.stack(np.float32) for m in masks]))
    preview = write_ppm(out_path.with_suffix(".ppm"), prediction_preview(images[0], masks[0]))
    logger.info(f"Predicted {len(masks)} slice(s): {[m.counts() for m in masks]}")
    return masks, preview


def run_gradcam(
    checkpoint_dir: PathLike,
    input_path: PathLike,
    layer: str,
    region: str,
    out_path: PathLike,
) -> Heatmap:
    """Grad-CAM for the first slice of `input_path`, written as an overlay PPM."""
    checkpoint = load_checkpoint(checkpoint_dir)
    model = checkpoint.build_model()
    image = _load_images(input_path)[0].astype(np.float32)
    empty = np.zeros(image.shape[1:], dtype=bool)
    pair = SlicePair(image=image, mask=RegionMask(wt=empty, tc=empty, et=empty))
    heatmap = gradcam(model, GradCamRequest(layer=layer, region=region, pair=pair))
    write_ppm(out_path, overlay(image, heatmap.values))
    logger.info(f"Grad-CAM for {region} at {heatmap.layer} written to {out_path}")
    return heatmap
