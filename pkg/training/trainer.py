"""
Training loop: shuffled minibatches, BCE-Dice, Adam under cosine annealing,
and best-on-validation checkpointing.
"""

import math
from typing import List, Optional

import numpy as np

from engine import Tensor
from models.config_models import DataSection, TrainConfig
from models.report_models import EpochRecord
from network.decoder import AXUNet
from pipeline.augmentation import AugmentationConfig
from pipeline.dataset import SliceDataset
from training.checkpoint import Checkpoint, save_checkpoint
from training.evaluator import evaluate
from training.losses import bce_dice_loss
from training.optimizer import Adam, cosine_lr
from utils.errors import DataError, NumericError
from utils.logger import setup_logger

logger = setup_logger(__name__)


def train_epoch(
    model: AXUNet,
    optimizer: Adam,
    dataset: SliceDataset,
    cfg: TrainConfig,
    epoch: int,
    lr: float,
) -> float:
    """
    One pass over the training set.

    Returns:
        Mean minibatch loss

    Raises:
        NumericError: If a forward op or the loss turns non-finite
    """
    dtype = model.parameters()[0].dtype
    augmentation = AugmentationConfig() if cfg.augment else None
    losses: List[float] = []
    for step, (images, masks, _) in enumerate(dataset.batches(cfg.batch_size, epoch, cfg.seed, True, augmentation)):
        optimizer.zero_grad()
        try:
            logits = model(Tensor(images.astype(dtype)))
            loss = bce_dice_loss(logits, masks.astype(dtype), eps=cfg.smooth_eps)
        except NumericError as e:
            raise NumericError(f"epoch {epoch} step {step} (lr {lr:.3e}): {e}") from e
        value = loss.item()
        if not math.isfinite(value):
            raise NumericError(f"non-finite loss {value} at epoch {epoch} step {step} (lr {lr:.3e})")
        loss.backward()
        optimizer.step(lr)
        losses.append(value)
        logger.debug(f"epoch {epoch} step {step}: loss {value:.5f}")
    return float(np.mean(losses))


def train(
    model: AXUNet,
    train_set: SliceDataset,
    val_set: Optional[SliceDataset],
    cfg: TrainConfig,
    data: Optional[DataSection] = None,
) -> Checkpoint:
    """
    Train for `cfg.epochs` epochs and keep the weights with the best mean
    validation Dice.

    Without a validation set the training slices are used for selection.
    When `cfg.checkpoint_dir` is set, the best checkpoint is written there
    each time it improves and once more at the end with the full history.

    Args:
        model: Freshly initialised network
        train_set: Training slices
        val_set: Validation slices
        cfg: Hyperparameters
        data: Data settings recorded in the checkpoint

    Returns:
        Best checkpoint

    Raises:
        DataError: On an empty training set
        NumericError: On a non-finite loss
    """
    if train_set is None or len(train_set) == 0:
        raise DataError("training set is empty")
    if val_set is None or len(val_set) == 0:
        logger.warning("No validation slices; selecting checkpoints on the training set")
        val_set = train_set

    optimizer = Adam(model.named_parameters(), cfg)
    history: List[EpochRecord] = []
    best: Optional[Checkpoint] = None
    logger.info(
        f"Training {model.num_parameters():,} parameters on {len(train_set)} slices "
        f"for {cfg.epochs} epochs (batch {cfg.batch_size}, lr0 {cfg.lr0})"
    )

    for epoch in range(cfg.epochs):
        lr = cosine_lr(epoch, cfg)
        train_loss = train_epoch(model, optimizer, train_set, cfg, epoch, lr)
        val_dice = evaluate(model, val_set, cfg.mask_threshold, split="val", batch_size=cfg.batch_size).aggregate.mean
        history.append(EpochRecord(epoch=epoch, lr=lr, train_loss=train_loss, val_dice=val_dice))
        logger.info(f"Epoch {epoch + 1}/{cfg.epochs}: loss {train_loss:.5f} lr {lr:.3e} val Dice {val_dice:.4f}")

        if best is None or val_dice > best.best_val_dice:
            best = Checkpoint(
                architecture=model.config,
                train=cfg,
                data=data,
                epoch=epoch,
                best_val_dice=val_dice,
                state=model.state_dict(),
                history=list(history),
            )
            if cfg.checkpoint_dir:
                save_checkpoint(best, cfg.checkpoint_dir)

    best = best.model_copy(update={"history": history})
    if cfg.checkpoint_dir:
        save_checkpoint(best, cfg.checkpoint_dir)
    logger.info(f"Best validation Dice {best.best_val_dice:.4f} at epoch {best.epoch + 1}")
    return best
