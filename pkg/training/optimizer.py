"""
Adam with bias correction and the cosine-annealed learning-rate schedule.
"""

import math
from typing import Dict, Iterable, Optional, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from engine import Tensor
from models.config_models import TrainSection
from utils.errors import ConfigError, ShapeError


class AdamState(BaseModel):
    """First/second moment buffers keyed by parameter name, plus the step counter."""

    model_config = ConfigDict(arbitrary_types_allowed=True)

    beta1: float = Field(default=0.9, ge=0, lt=1)
    beta2: float = Field(default=0.999, ge=0, lt=1)
    eps: float = Field(default=1e-8, gt=0)
    step: int = Field(default=0, ge=0)
    m: Dict[str, np.ndarray] = Field(default_factory=dict)
    v: Dict[str, np.ndarray] = Field(default_factory=dict)

    @classmethod
    def for_parameters(cls, params: Dict[str, Tensor], cfg: Optional[TrainSection] = None) -> "AdamState":
        cfg = cfg or TrainSection()
        return cls(
            beta1=cfg.beta1,
            beta2=cfg.beta2,
            eps=cfg.adam_eps,
            m={name: np.zeros_like(p.data) for name, p in params.items()},
            v={name: np.zeros_like(p.data) for name, p in params.items()},
        )


def adam_step(
    params: Dict[str, Tensor],
    grads: Dict[str, Optional[np.ndarray]],
    state: AdamState,
    lr: float,
) -> AdamState:
    """
    One bias-corrected Adam update.

        m ← β1·m + (1−β1)·g
        v ← β2·v + (1−β2)·g²
        θ ← θ − lr · m̂ / (√v̂ + ε),  m̂ = m/(1−β1^t), v̂ = v/(1−β2^t)

    A parameter without a gradient is treated as having a zero gradient.

    Args:
        params: Name -> parameter; `data` is replaced, never written in place
        grads: Name -> gradient array
        state: Moment buffers (updated in place and returned)
        lr: Learning rate for this step

    Returns:
        The updated state

    Raises:
        ShapeError: If a gradient or moment shape differs from its parameter
    """
    state.step += 1
    t = state.step
    bc1 = 1.0 - state.beta1**t
    bc2 = 1.0 - state.beta2**t
    for name, param in params.items():
        grad = grads.get(name)
        grad = np.zeros_like(param.data) if grad is None else np.asarray(grad, dtype=param.dtype)
        m = state.m.setdefault(name, np.zeros_like(param.data))
        v = state.v.setdefault(name, np.zeros_like(param.data))
        if not grad.shape == m.shape == v.shape == param.shape:
            raise ShapeError(
                f"adam_step: {name} has param {param.shape}, grad {grad.shape}, moments {m.shape}/{v.shape}"
            )
        m = state.beta1 * m + (1.0 - state.beta1) * grad
        v = state.beta2 * v + (1.0 - state.beta2) * grad * grad
        state.m[name], state.v[name] = m, v
        update = lr * (m / bc1) / (np.sqrt(v / bc2) + state.eps)
        param.data = (param.data - update).astype(param.dtype)
    return state


class Adam:
    """Adam over a module's named parameters."""

    def __init__(self, named_parameters: Iterable[Tuple[str, Tensor]], cfg: Optional[TrainSection] = None):
        self.params = dict(named_parameters)
        self.state = AdamState.for_parameters(self.params, cfg)

    def step(self, lr: float) -> None:
        adam_step(self.params, {name: p.grad for name, p in self.params.items()}, self.state, lr)

    def zero_grad(self) -> None:
        for p in self.params.values():
            p.grad = None


def cosine_lr(epoch: int, cfg: TrainSection) -> float:
    """
    Cosine annealing from lr0 at epoch 0 to 0 at epoch `cfg.epochs`.

    Raises:
        ConfigError: If epoch lies outside [0, epochs]
    """
    if epoch < 0 or epoch > cfg.epochs:
        raise ConfigError(f"epoch {epoch} outside the schedule [0, {cfg.epochs}]")
    return 0.5 * cfg.lr0 * (1.0 + math.cos(math.pi * epoch / cfg.epochs))
