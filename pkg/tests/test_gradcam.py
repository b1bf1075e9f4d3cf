"""Tests for Grad-CAM heatmaps and the PPM overlays."""

import numpy as np
import pytest

from engine import Tensor
from models.data_models import RegionMask, SlicePair
from network.layers import Conv2d, Module
from tools.gradcam import LAYER_ALIASES, GradCamRequest, gradcam
from tools.overlay import colormap, overlay, prediction_preview, write_ppm
from utils.errors import ConfigError, ShapeError
from utils.rng import make_rng

STANDARD_LAYERS = ("final", "attention1", "deblock3")


class IdentityPath(Module):
    """Logits are the input itself, passed through an identity 1×1 convolution."""

    def __init__(self):
        self.features = Conv2d(3, 3, 1, make_rng(0, "init"), dtype=np.float64)
        self.features.weight.data = np.eye(3).reshape(3, 3, 1, 1)

    def forward(self, x: Tensor) -> Tensor:
        return self.features(x)


@pytest.fixture
def request_for(synthetic_pairs):
    def build(layer: str, region: str = "WT") -> GradCamRequest:
        return GradCamRequest(layer=layer, region=region, pair=synthetic_pairs[0])

    return build


class TestGradCam:
    @pytest.mark.parametrize("layer", sorted(LAYER_ALIASES))
    def test_heatmap_range_and_size(self, micro_model, request_for, layer):
        heat = gradcam(micro_model, request_for(layer))
        assert heat.values.shape == (32, 32)
        assert heat.values.min() >= 0.0 and heat.values.max() <= 1.0
        assert heat.layer == LAYER_ALIASES[layer]

    @pytest.mark.parametrize("layer", STANDARD_LAYERS)
    @pytest.mark.parametrize("region", ["WT", "TC", "ET"])
    def test_leaves_parameters_untouched(self, micro_model, request_for, layer, region):
        before = micro_model.state_dict()
        gradcam(micro_model, request_for(layer, region))
        after = micro_model.state_dict()
        assert all(np.array_equal(before[name], after[name]) for name in before)
        assert all(p.grad is None for p in micro_model.parameters())

    @pytest.mark.parametrize("layer", STANDARD_LAYERS)
    def test_invariant_to_target_scale(self, micro_model, request_for, layer):
        a = gradcam(micro_model, request_for(layer), target_scale=1.0)
        b = gradcam(micro_model, request_for(layer), target_scale=2.0)
        np.testing.assert_allclose(a.values, b.values, atol=1e-10)

    @pytest.mark.parametrize("layer", STANDARD_LAYERS)
    def test_dead_path_gives_zero_map(self, micro_model, request_for, layer):
        micro_model.head.weight.data = np.zeros_like(micro_model.head.weight.data)
        heat = gradcam(micro_model, request_for(layer))
        assert not heat.values.any()

    def test_identity_path_peaks_with_activation(self):
        image = np.zeros((3, 8, 8))
        image[0] = np.linspace(0.0, 0.5, 64).reshape(8, 8)
        image[0, 5, 2] = 0.9
        empty = np.zeros((8, 8), dtype=bool)
        pair = SlicePair(image=image, mask=RegionMask(wt=empty, tc=empty, et=empty))
        heat = gradcam(IdentityPath(), GradCamRequest(layer="features", region="WT", pair=pair))
        assert np.unravel_index(heat.values.argmax(), heat.values.shape) == (5, 2)
        np.testing.assert_allclose(heat.values, image[0] / 0.9, atol=1e-12)

    def test_final_alias_is_last_deconvolution(self, micro_model):
        modules = dict(micro_model.named_modules())
        assert LAYER_ALIASES["final"] == "decoder.final" != "head"
        assert type(modules["decoder.final"]).__name__ == "ConvTranspose2d"

    def test_dotted_path_accepted(self, micro_model, request_for):
        heat = gradcam(micro_model, request_for("decoder.deblock1"))
        assert heat.layer == "decoder.deblock1"

    def test_unknown_layer(self, micro_model, request_for):
        with pytest.raises(ConfigError):
            gradcam(micro_model, request_for("decoder.deblock9"))


class TestOverlay:
    def test_colormap_bands(self):
        rgb = colormap(np.array([0.0, 0.5, 1.0]))
        np.testing.assert_array_equal(rgb[0], [0, 255, 0])
        assert rgb[1][0] == 255 and 165 < rgb[1][1] < 255
        np.testing.assert_array_equal(rgb[2], [255, 0, 0])

    def test_zero_heatmap_is_grayscale(self):
        image = np.full((3, 4, 5), 0.4)
        out = overlay(image, np.zeros((4, 5)))
        assert out.dtype == np.uint8
        assert (out == 102).all()

    def test_full_heat_blends_red(self):
        image = np.full((3, 2, 2), 0.4)
        out = overlay(image, np.ones((2, 2)))
        np.testing.assert_array_equal(out[0, 0], [163, 61, 61])

    def test_size_mismatch(self):
        with pytest.raises(ShapeError):
            overlay(np.zeros((3, 4, 4)), np.zeros((5, 4)))

    def test_prediction_preview_colours_regions(self):
        wt = np.array([[True, True], [False, False]])
        tc = np.array([[True, False], [False, False]])
        preview = prediction_preview(np.zeros((3, 2, 2)), RegionMask(wt=wt, tc=tc, et=np.zeros_like(wt)))
        np.testing.assert_array_equal(preview[0, 0], [102, 102, 0])
        np.testing.assert_array_equal(preview[0, 1], [102, 0, 0])
        np.testing.assert_array_equal(preview[1, 0], [0, 0, 0])

    def test_ppm_header(self, tmp_path):
        path = write_ppm(tmp_path / "map.ppm", np.zeros((3, 5, 3), dtype=np.uint8))
        data = path.read_bytes()
        assert data.startswith(b"P6\n5 3\n255\n")
        assert len(data) == len(b"P6\n5 3\n255\n") + 5 * 3 * 3

    def test_ppm_rejects_gray(self, tmp_path):
        with pytest.raises(ShapeError):
            write_ppm(tmp_path / "x.ppm", np.zeros((3, 5)))
