"""Tests for the Xception encoder and its configuration."""

import numpy as np
import pytest
from pydantic import ValidationError

from engine import Tensor
from models.config_models import ModelConfig, XceptionConfig, scaled_channels
from network.backbone import EntryBlock, MiddleBlock, XceptionEncoder, encode
from network.layers import SeparableConv2d
from tools.gradcheck import gradient_check, random_projection_loss
from utils.errors import ConfigError, ShapeError
from utils.rng import make_rng


class TestWidths:
    def test_canonical_widths(self):
        backbone = ModelConfig().backbone()
        assert backbone.tap_channels == (32, 128, 256, 728)
        assert backbone.exit_channels == [1024, 1536, 2048]
        assert backbone.bottleneck_channels == 2048

    def test_scaled_widths_stay_divisible(self, make_config):
        backbone = make_config().backbone()
        assert backbone.tap_channels == (2, 8, 16, 46)
        assert backbone.exit_channels == [64, 96, 128]
        assert all(c % 2 == 0 for c in backbone.tap_channels)

    def test_scaled_channels_floor_at_divisor(self):
        assert scaled_channels(32, 0.01, 8) == 8
        assert scaled_channels(728, 0.25, 8) == 184

    def test_tap_not_divisible_by_reduction(self):
        with pytest.raises(ValidationError):
            XceptionConfig(stem_channels=30, attention_reduction=8)

    def test_input_size_multiple_of_32(self):
        with pytest.raises(ValidationError):
            ModelConfig(input_size=100)


class TestSeparableConv:
    def test_fewer_parameters_than_full_conv(self):
        layer = SeparableConv2d(16, 32, np.random.default_rng(0))
        full = 32 * 16 * 3 * 3
        assert layer.depthwise.size + layer.pointwise.size < full

    def test_single_output_channel_rejected(self):
        with pytest.raises(ConfigError):
            SeparableConv2d(4, 1, np.random.default_rng(0))


class TestBlocks:
    def test_entry_block_halves_spatial(self, rng):
        block = EntryBlock(2, 4, np.random.default_rng(0), dtype=np.float64)
        out = block(Tensor(rng.standard_normal((1, 2, 8, 6)), dtype=np.float64))
        assert out.shape == (1, 4, 4, 3)

    @pytest.mark.parametrize("shape", [(1, 2, 4, 4), (2, 2, 2, 2), (1, 2, 6, 4)])
    def test_entry_block_gradients(self, rng, shape):
        block = EntryBlock(2, 4, np.random.default_rng(1), dtype=np.float64)
        x = Tensor(rng.standard_normal(shape), requires_grad=True, dtype=np.float64)
        tensors = {"x": x, **dict(block.named_parameters())}
        errors = gradient_check(random_projection_loss(lambda: block(x)), tensors, h=1e-6)
        assert max(errors.values()) < 1e-5

    @pytest.mark.parametrize("shape", [(1, 3, 3, 3), (2, 3, 2, 4), (1, 3, 4, 4)])
    def test_middle_block_gradients(self, rng, shape):
        block = MiddleBlock(3, np.random.default_rng(2), dtype=np.float64)
        x = Tensor(rng.standard_normal(shape), requires_grad=True, dtype=np.float64)
        tensors = {"x": x, **dict(block.named_parameters())}
        errors = gradient_check(random_projection_loss(lambda: block(x)), tensors, h=1e-6)
        assert max(errors.values()) < 1e-5

    def test_middle_block_keeps_shape(self, rng):
        block = MiddleBlock(4, np.random.default_rng(0))
        x = Tensor(rng.standard_normal((1, 4, 5, 5)).astype(np.float32))
        assert block(x).shape == x.shape


class TestEncoder:
    @pytest.fixture
    def encoder(self, make_config):
        return XceptionEncoder(make_config().backbone(), make_rng(0, "init"), dtype=np.float64)

    def test_tap_strides_and_widths(self, encoder, rng):
        features = encode(Tensor(rng.random((2, 3, 64, 64)), dtype=np.float64), encoder)
        assert features.f1.shape == (2, 2, 32, 32)
        assert features.f2.shape == (2, 8, 16, 16)
        assert features.f3.shape == (2, 16, 8, 8)
        assert features.f4.shape == (2, 46, 4, 4)
        assert features.bottleneck.shape == (2, 128, 2, 2)
        assert len(features.taps) == 4

    def test_spatial_not_divisible_by_32(self, encoder):
        with pytest.raises(ShapeError):
            encode(Tensor(np.zeros((1, 3, 48, 48))), encoder)

    def test_wrong_input_channels(self, encoder):
        with pytest.raises(ShapeError):
            encode(Tensor(np.zeros((1, 4, 32, 32))), encoder)

    def test_middle_repeats_build_blocks(self, make_config):
        encoder = XceptionEncoder(make_config(middle_repeats=3).backbone(), make_rng(0, "init"))
        assert len(encoder.middle) == 3
        names = [name for name, _ in encoder.named_parameters()]
        assert "middle.2.sep3.pointwise" in names
