"""
Grad-CAM Tool

Gradient-weighted class activation maps for the segmentation network. The
target scalar is the spatial sum of one region channel's logits; the map is
ReLU(Σ_k w_k A_k) with w_k the spatial mean of ∂S/∂A_k, upsampled bilinearly
to the input size and divided by its maximum.
"""

from typing import Dict, Literal

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from engine import Tensor
from models.data_models import REGIONS, SlicePair
from network.layers import Module, record_activations
from pipeline.preprocessing import resample_plane
from utils.errors import ShapeError
from utils.logger import setup_logger

logger = setup_logger(__name__)

# Short names for the layers usually inspected, plus the PAM branch of the shallowest attention block.
# "final" is the last decoder deconvolution, not the 1×1 head: hooking the head would make the map
# the ReLU of the explained logit itself.
LAYER_ALIASES: Dict[str, str] = {
    "final": "decoder.final",
    "attention1": "attention1",
    "deblock3": "decoder.deblock3.conv_out",
    "pam1": "attention1.pam",
}


class GradCamRequest(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True)

    layer: str = Field(description="Alias (final, attention1, deblock3, pam1) or dotted module path")
    region: Literal["WT", "TC", "ET"] = Field(default="WT", description="Region channel whose logits are explained")
    pair: SlicePair = Field(description="Input slice")

    @property
    def layer_path(self) -> str:
        return LAYER_ALIASES.get(self.layer, self.layer)


class Heatmap(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True)

    values: np.ndarray = Field(description="Plane [H, W] in [0, 1] at input resolution")
    layer: str
    region: str


def gradcam(model: Module, req: GradCamRequest, target_scale: float = 1.0) -> Heatmap:
    """
    Compute a Grad-CAM heatmap.

    Parameter gradients produced along the way are cleared before returning;
    parameter values are never touched.

    Args:
        model: Trained network (any module whose output is [N, 3, H, W] logits)
        req: Layer, region and input slice
        target_scale: Positive factor applied to the target scalar

    Returns:
        Heatmap at the input resolution

    Raises:
        ConfigError: If the layer path does not resolve to a module
        ShapeError: If the hooked activation is not a non-empty N×C×H×W map
    """
    path = req.layer_path
    channel = REGIONS.index(req.region)
    dtype = model.parameters()[0].dtype
    x = Tensor(req.pair.image[None].astype(dtype))

    try:
        with record_activations(model, [path]) as captured:
            logits = model(x)
        activation = captured.get(path)
        if activation is None or activation.ndim != 4 or activation.size == 0:
            shape = None if activation is None else activation.shape
            raise ShapeError(f"gradcam: layer {path} produced no usable activation (shape {shape})")

        seed = np.zeros_like(logits.data)
        seed[:, channel] = target_scale
        logits.backward(seed)

        acts = activation.data[0].astype(np.float64)
        grads = activation.grad[0] if activation.grad is not None else np.zeros_like(acts)
        weights = grads.mean(axis=(1, 2))
        cam = np.maximum(np.tensordot(weights, acts, axes=1), 0.0)
    finally:
        model.zero_grad()

    cam = np.maximum(resample_plane(cam, req.pair.image.shape[1:], order=1), 0.0)
    peak = cam.max()
    if peak > 0:
        cam = cam / peak
    logger.debug(f"Grad-CAM {req.region} @ {path}: activation {activation.shape}, peak {peak:.4g}")
    return Heatmap(values=np.clip(cam, 0.0, 1.0), layer=path, region=req.region)
