"""
Finite-Difference Gradient Checker

Compares reverse-mode gradients against central differences. Intended for
float64 tensors; in float32 the differences are too noisy to be meaningful.
"""

from typing import Callable, Dict, Optional, Sequence

import numpy as np

from engine import Tensor, no_grad

ScalarFn = Callable[[], Tensor]


def relative_error(analytic: np.ndarray, numeric: np.ndarray) -> float:
    """Norm-relative error ||a − n|| / max(||a||, ||n||); 0 when both vanish."""
    denom = max(np.linalg.norm(analytic), np.linalg.norm(numeric))
    if denom == 0.0:
        return 0.0
    return float(np.linalg.norm(analytic - numeric) / denom)


def numerical_gradient(
    fn: ScalarFn,
    tensor: Tensor,
    h: float = 1e-4,
    indices: Optional[Sequence[int]] = None,
) -> np.ndarray:
    """
    Central-difference gradient of a scalar function with respect to `tensor`.

    Args:
        fn: Zero-argument callable recomputing the scalar from current tensor data
        tensor: Tensor whose entries are perturbed (its data array is replaced, never written into)
        h: Step size
        indices: Flat indices to probe; all entries when None

    Returns:
        Flat array of partial derivatives, one per probed index
    """
    base = tensor.data
    flat_indices = range(base.size) if indices is None else indices
    grads = np.zeros(len(flat_indices), dtype=np.float64)
    with no_grad():
        for out_pos, flat in enumerate(flat_indices):
            plus = base.copy()
            plus.reshape(-1)[flat] += h
            tensor.data = plus
            f_plus = fn().item()
            minus = base.copy()
            minus.reshape(-1)[flat] -= h
            tensor.data = minus
            f_minus = fn().item()
            grads[out_pos] = (f_plus - f_minus) / (2.0 * h)
    tensor.data = base
    return grads


def gradient_check(
    fn: ScalarFn,
    tensors: Dict[str, Tensor],
    h: float = 1e-4,
    max_entries: Optional[int] = None,
    rng: Optional[np.random.Generator] = None,
) -> Dict[str, float]:
    """
    Check backward() of a scalar function against central differences.

    Args:
        fn: Zero-argument callable building the scalar output
        tensors: Named tensors (requires_grad=True) to check
        h: Finite-difference step
        max_entries: Probe at most this many entries in total, drawn at random
        rng: Generator for the subsample

    Returns:
        Relative error per checked tensor name
    """
    for tensor in tensors.values():
        tensor.grad = None
    fn().backward()
    analytic = {name: (t.grad if t.grad is not None else np.zeros_like(t.data)) for name, t in tensors.items()}

    chosen: Dict[str, Optional[np.ndarray]] = {name: None for name in tensors}
    if max_entries is not None:
        rng = rng or np.random.default_rng(0)
        offsets = np.cumsum([0] + [t.size for t in tensors.values()])
        picks = rng.choice(offsets[-1], size=min(max_entries, int(offsets[-1])), replace=False)
        for i, name in enumerate(tensors):
            local = picks[(picks >= offsets[i]) & (picks < offsets[i + 1])] - offsets[i]
            chosen[name] = np.sort(local)

    errors: Dict[str, float] = {}
    for name, tensor in tensors.items():
        indices = chosen[name]
        if indices is not None and len(indices) == 0:
            continue
        numeric = numerical_gradient(fn, tensor, h=h, indices=indices)
        flat = analytic[name].reshape(-1)
        errors[name] = relative_error(flat if indices is None else flat[indices], numeric)
    return errors


def random_projection_loss(output_fn: Callable[[], Tensor], seed: int = 0) -> ScalarFn:
    """Wrap a tensor-valued function as Σ(out · R) with a fixed random R."""
    cache: Dict[str, np.ndarray] = {}

    def scalar() -> Tensor:
        out = output_fn()
        if "r" not in cache:
            cache["r"] = np.random.default_rng(seed).standard_normal(out.shape)
        return (out * Tensor(cache["r"], dtype=out.dtype)).sum()

    return scalar
