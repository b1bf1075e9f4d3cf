"""
DeBlock decoder and the full AXUNet assembly.
"""

from typing import List, Optional, Sequence

import numpy as np

from engine import Tensor, no_grad
from engine import functional as F
from models.config_models import ModelConfig
from models.data_models import RegionMask
from network.attention import SelfAttention
from network.backbone import XceptionEncoder, encode
from network.layers import Conv2d, ConvTranspose2d, Module, check_channels
from utils.errors import ConfigError, ShapeError
from utils.logger import setup_logger

logger = setup_logger(__name__)


class DeBlockParams(Module):
    """
    1×1 conv -> 3×3 deconv (stride 2) -> 3×3 deconv -> 1×1 conv, ReLU after each.

    The stride-2 deconvolution uses output_padding 1 so the spatial size
    exactly doubles.
    """

    def __init__(self, in_ch: int, out_ch: int, rng: np.random.Generator, dtype: np.dtype = np.float32):
        self.conv_in = Conv2d(in_ch, out_ch, 1, rng, dtype=dtype)
        self.deconv1 = ConvTranspose2d(out_ch, out_ch, 3, rng, stride=2, padding=1, output_padding=1, dtype=dtype)
        self.deconv2 = ConvTranspose2d(out_ch, out_ch, 3, rng, stride=1, padding=1, dtype=dtype)
        self.conv_out = Conv2d(out_ch, out_ch, 1, rng, dtype=dtype)
        self.in_ch, self.out_ch = in_ch, out_ch

    def forward(self, x: Tensor) -> Tensor:
        check_channels(x, self.in_ch, "deblock")
        u = F.relu(self.conv_in(x))
        u = F.relu(self.deconv1(u))
        u = F.relu(self.deconv2(u))
        return F.relu(self.conv_out(u))


def deblock_forward(x: Tensor, skip_attended: Tensor, p: DeBlockParams, combine_mode: str = "concat") -> Tensor:
    """
    Upsample `x` through one DeBlock and join it with the attended skip.

    Args:
        x: Decoder input [N, C_in, H, W]
        skip_attended: Attended encoder tap [N, C_out, 2H, 2W]
        p: DeBlock parameters
        combine_mode: "concat" (channel concatenation) or "add"

    Returns:
        [N, 2·C_out, 2H, 2W] for concat, [N, C_out, 2H, 2W] for add

    Raises:
        ShapeError: If the upsampled output and the skip disagree spatially
    """
    u = p(x)
    if u.shape[2:] != skip_attended.shape[2:]:
        raise ShapeError(f"deblock: upsampled {u.shape[2:]} does not match skip {skip_attended.shape[2:]}")
    if combine_mode == "concat":
        return F.concat([u, skip_attended], axis=1)
    if combine_mode == "add":
        if u.shape[1] != skip_attended.shape[1]:
            raise ShapeError(f"deblock add: {u.shape[1]} channels vs skip {skip_attended.shape[1]}")
        return u + skip_attended
    raise ConfigError(f"unknown combine_mode {combine_mode!r}")


class Decoder(Module):
    """DeBlock4..DeBlock1 (deepest first) and the final stride-2 deconvolution."""

    def __init__(
        self,
        bottleneck_ch: int,
        tap_channels: Sequence[int],
        combine_mode: str,
        rng: np.random.Generator,
        dtype: np.dtype = np.float32,
    ):
        self.combine_mode = combine_mode
        factor = 2 if combine_mode == "concat" else 1
        c1, c2, c3, c4 = tap_channels
        self.deblock4 = DeBlockParams(bottleneck_ch, c4, rng, dtype=dtype)
        self.deblock3 = DeBlockParams(factor * c4, c3, rng, dtype=dtype)
        self.deblock2 = DeBlockParams(factor * c3, c2, rng, dtype=dtype)
        self.deblock1 = DeBlockParams(factor * c2, c1, rng, dtype=dtype)
        self.final = ConvTranspose2d(factor * c1, c1, 3, rng, stride=2, padding=1, output_padding=1, dtype=dtype)
        self.out_channels = c1

    def forward(self, bottleneck: Tensor, skips: Sequence[Tensor]) -> Tensor:
        s1, s2, s3, s4 = skips
        out = deblock_forward(bottleneck, s4, self.deblock4, self.combine_mode)
        out = deblock_forward(out, s3, self.deblock3, self.combine_mode)
        out = deblock_forward(out, s2, self.deblock2, self.combine_mode)
        out = deblock_forward(out, s1, self.deblock1, self.combine_mode)
        return F.relu(self.final(out))


class AXUNet(Module):
    """
    Xception encoder, four self-attention skips, DeBlock decoder and a 1×1
    head producing one logit plane per region (WT, TC, ET).
    """

    def __init__(self, config: ModelConfig, rng: np.random.Generator, dtype: np.dtype = np.float32):
        if config.combine_mode not in ("concat", "add"):
            raise ConfigError(f"unknown combine_mode {config.combine_mode!r}")
        self.config = config
        backbone = config.backbone()
        taps = backbone.tap_channels
        self.encoder = XceptionEncoder(backbone, rng, dtype=dtype)
        if config.attention_enabled:
            self.attention1 = SelfAttention(taps[0], rng, config.attention_reduction, dtype=dtype)
            self.attention2 = SelfAttention(taps[1], rng, config.attention_reduction, dtype=dtype)
            self.attention3 = SelfAttention(taps[2], rng, config.attention_reduction, dtype=dtype)
            self.attention4 = SelfAttention(taps[3], rng, config.attention_reduction, dtype=dtype)
        self.decoder = Decoder(backbone.bottleneck_channels, taps, config.combine_mode, rng, dtype=dtype)
        self.head = Conv2d(self.decoder.out_channels, config.num_regions, 1, rng, dtype=dtype)
        self._validate_widths(backbone.tap_channels, backbone.bottleneck_channels)
        logger.info(
            f"Built AXUNet: width={config.width_multiplier} middle={config.middle_repeats} "
            f"attention={'on' if config.attention_enabled else 'off'} combine={config.combine_mode} "
            f"params={self.num_parameters():,}"
        )

    def _validate_widths(self, taps: Sequence[int], bottleneck: int) -> None:
        factor = 2 if self.config.combine_mode == "concat" else 1
        expected_in = [bottleneck, factor * taps[3], factor * taps[2], factor * taps[1]]
        blocks = [self.decoder.deblock4, self.decoder.deblock3, self.decoder.deblock2, self.decoder.deblock1]
        for level, (block, want, skip) in enumerate(zip(blocks, expected_in, reversed(taps))):
            if block.in_ch != want or block.out_ch != skip:
                raise ConfigError(
                    f"deblock{4 - level}: widths {block.in_ch}->{block.out_ch} inconsistent with "
                    f"input {want} and skip {skip}"
                )

    def attention_modules(self) -> List[Optional[SelfAttention]]:
        return [getattr(self, f"attention{i}", None) for i in range(1, 5)]

    def forward(self, x: Tensor) -> Tensor:
        return axunet_forward(x, self)


def axunet_forward(x: Tensor, model: AXUNet) -> Tensor:
    """
    Full forward pass returning logits.

    Args:
        x: Input [N, 3, H, W], H and W divisible by 32
        model: Network parameters

    Returns:
        Logits [N, num_regions, H, W]
    """
    features = encode(x, model.encoder)
    skips = []
    for tap, attention in zip(features.taps, model.attention_modules()):
        skips.append(tap if attention is None else attention(tap))
    decoded = model.decoder(features.bottleneck, skips)
    return model.head(decoded)


def predict_masks(logits, threshold: float = 0.5) -> List[RegionMask]:
    """
    Threshold per-channel sigmoid probabilities into binary region masks.

    Args:
        logits: Tensor or array [N, 3, H, W]
        threshold: Foreground when sigmoid(logit) >= threshold

    Returns:
        One RegionMask per slice
    """
    values = logits.data if isinstance(logits, Tensor) else np.asarray(logits)
    if values.ndim != 4 or values.shape[1] != 3:
        raise ShapeError(f"predict_masks expects N×3×H×W logits, got {values.shape}")
    with no_grad():
        probs = F.sigmoid(Tensor(values.astype(np.float64))).data
    hard = probs >= threshold
    return [RegionMask(wt=m[0], tc=m[1], et=m[2], enforce_nesting=True) for m in hard]
