"""Shared fixtures: tiny network configs and synthetic data."""

import numpy as np
import pytest

from models.config_models import ModelConfig
from network.decoder import AXUNet
from pipeline.preprocessing import preprocess_volume
from pipeline.synthetic import synth_volume
from utils.rng import make_rng


def micro_config(**overrides) -> ModelConfig:
    """Smallest sensible AXUNet: 2/8/16/46 tap widths, one middle block, 32×32 input."""
    values = dict(width_multiplier=0.0625, middle_repeats=1, attention_reduction=2, input_size=32)
    values.update(overrides)
    return ModelConfig(**values)


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(1234)


@pytest.fixture
def micro_model() -> AXUNet:
    return AXUNet(micro_config(), make_rng(0, "init"), dtype=np.float64)


@pytest.fixture(scope="session")
def synthetic_volume():
    return synth_volume("SYN_00000", (48, 48, 24), make_rng(7, "synth", 0))


@pytest.fixture(scope="session")
def synthetic_pairs(synthetic_volume):
    return preprocess_volume(synthetic_volume, threshold=0.007, size=(32, 32))


@pytest.fixture
def make_config():
    return micro_config
