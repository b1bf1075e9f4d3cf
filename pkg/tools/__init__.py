"""Tensor codec, gradient checking, Grad-CAM and overlays."""
