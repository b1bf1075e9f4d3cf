"""
Xception encoder: stem, entry flow, middle flow and exit flow, exposing the
four skip taps (strides 2, 4, 8, 16) and the stride-32 bottleneck.
"""

from typing import NamedTuple

import numpy as np

from engine import Tensor
from engine import functional as F
from models.config_models import XceptionConfig
from network.layers import Conv2d, Module, ModuleList, SeparableConv2d, check_channels
from utils.errors import ShapeError
from utils.logger import setup_logger

logger = setup_logger(__name__)

SPATIAL_DIVISOR = 32


class EncoderFeatures(NamedTuple):
    f1: Tensor
    f2: Tensor
    f3: Tensor
    f4: Tensor
    bottleneck: Tensor

    @property
    def taps(self):
        return (self.f1, self.f2, self.f3, self.f4)


class EntryBlock(Module):
    """
    sepconv -> ReLU -> sepconv -> maxpool(3, 2, pad 1), plus a strided 1×1
    side branch; the two are summed, halving the spatial size.
    """

    def __init__(self, in_ch: int, out_ch: int, rng: np.random.Generator, dtype: np.dtype = np.float32):
        self.sep1 = SeparableConv2d(in_ch, out_ch, rng, dtype=dtype)
        self.sep2 = SeparableConv2d(out_ch, out_ch, rng, dtype=dtype)
        self.side = Conv2d(in_ch, out_ch, 1, rng, stride=2, dtype=dtype)
        self.in_ch, self.out_ch = in_ch, out_ch

    def forward(self, x: Tensor) -> Tensor:
        check_channels(x, self.in_ch, "entry_block")
        main = F.maxpool2d(self.sep2(F.relu(self.sep1(x))), k=3, stride=2, padding=1)
        return main + self.side(x)


class MiddleBlock(Module):
    """x + sep3(ReLU(sep2(ReLU(sep1(ReLU(x))))))."""

    def __init__(self, channels: int, rng: np.random.Generator, dtype: np.dtype = np.float32):
        self.sep1 = SeparableConv2d(channels, channels, rng, dtype=dtype)
        self.sep2 = SeparableConv2d(channels, channels, rng, dtype=dtype)
        self.sep3 = SeparableConv2d(channels, channels, rng, dtype=dtype)

    def forward(self, x: Tensor) -> Tensor:
        out = self.sep1(F.relu(x))
        out = self.sep2(F.relu(out))
        out = self.sep3(F.relu(out))
        return x + out


class Stem(Module):
    def __init__(self, in_ch: int, out_ch: int, rng: np.random.Generator, dtype: np.dtype = np.float32):
        self.conv1 = Conv2d(in_ch, out_ch, 3, rng, stride=2, padding=1, dtype=dtype)
        self.conv2 = Conv2d(out_ch, out_ch, 3, rng, stride=1, padding=1, dtype=dtype)

    def forward(self, x: Tensor) -> Tensor:
        return F.relu(self.conv2(F.relu(self.conv1(x))))


class ExitFlow(Module):
    """One entry-style block (stride 16 -> 32) then two separable-ReLU layers."""

    def __init__(self, in_ch: int, widths, rng: np.random.Generator, dtype: np.dtype = np.float32):
        block_ch, sep1_ch, sep2_ch = widths
        self.block = EntryBlock(in_ch, block_ch, rng, dtype=dtype)
        self.sep1 = SeparableConv2d(block_ch, sep1_ch, rng, dtype=dtype)
        self.sep2 = SeparableConv2d(sep1_ch, sep2_ch, rng, dtype=dtype)

    def forward(self, x: Tensor) -> Tensor:
        out = self.block(x)
        out = F.relu(self.sep1(out))
        return F.relu(self.sep2(out))


class XceptionEncoder(Module):
    def __init__(self, cfg: XceptionConfig, rng: np.random.Generator, dtype: np.dtype = np.float32):
        self.config = cfg
        c1, c2, c3, c4 = cfg.tap_channels
        self.stem = Stem(cfg.in_channels, c1, rng, dtype=dtype)
        self.entry1 = EntryBlock(c1, c2, rng, dtype=dtype)
        self.entry2 = EntryBlock(c2, c3, rng, dtype=dtype)
        self.entry3 = EntryBlock(c3, c4, rng, dtype=dtype)
        self.middle = ModuleList(MiddleBlock(c4, rng, dtype=dtype) for _ in range(cfg.middle_repeats))
        self.exit = ExitFlow(c4, cfg.exit_channels, rng, dtype=dtype)
        logger.debug(f"Built Xception encoder taps={cfg.tap_channels} bottleneck={cfg.bottleneck_channels}")

    def forward(self, x: Tensor) -> EncoderFeatures:
        return encode(x, self)


def encode(x: Tensor, encoder: XceptionEncoder) -> EncoderFeatures:
    """
    Run the encoder and collect its taps.

    Args:
        x: Input [N, in_channels, H, W] with H, W divisible by 32
        encoder: Encoder parameters

    Returns:
        EncoderFeatures with taps at strides 2, 4, 8, 16 and bottleneck at 32

    Raises:
        ShapeError: If spatial dims are not divisible by 32
    """
    check_channels(x, encoder.config.in_channels, "encode")
    h, w = x.shape[2:]
    if h % SPATIAL_DIVISOR or w % SPATIAL_DIVISOR:
        raise ShapeError(f"encode: spatial size {h}×{w} is not divisible by {SPATIAL_DIVISOR}")
    f1 = encoder.stem(x)
    f2 = encoder.entry1(f1)
    f3 = encoder.entry2(f2)
    f4 = encoder.entry3(f3)
    out = f4
    for block in encoder.middle:
        out = block(out)
    bottleneck = encoder.exit(out)
    return EncoderFeatures(f1, f2, f3, f4, bottleneck)
