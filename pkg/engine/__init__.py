"""Dense tensors with reverse-mode automatic differentiation."""

from engine.tensor import Function, Graph, Tensor, as_tensor, is_grad_enabled, no_grad

__all__ = ["Function", "Graph", "Tensor", "as_tensor", "is_grad_enabled", "no_grad"]
