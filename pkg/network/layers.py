"""
Module system and parameterised layers.

Modules own named `Parameter` tensors and child modules; dotted paths
(`encoder.entry1.sep1.depthwise`) are derived from attribute names and are the
checkpoint naming scheme.
"""

import contextlib
import contextvars
import math
from typing import Any, Dict, Iterable, Iterator, List, Optional, Sequence, Tuple

import numpy as np

from engine import Tensor
from engine import functional as F
from utils.errors import ConfigError, ShapeError


class Parameter(Tensor):
    """A trainable leaf tensor."""

    def __init__(self, data: np.ndarray, dtype: Optional[np.dtype] = None):
        super().__init__(data, requires_grad=True, dtype=dtype)


class _ActivationRecorder:
    def __init__(self, targets: Dict[int, str]):
        self.targets = targets
        self.activations: Dict[str, Tensor] = {}

    def offer(self, module: "Module", output: Any) -> None:
        path = self.targets.get(id(module))
        if path is not None and isinstance(output, Tensor):
            self.activations[path] = output.retain_grad()


_recorder: contextvars.ContextVar[Optional[_ActivationRecorder]] = contextvars.ContextVar("recorder", default=None)


class Module:
    """Base class: forward() plus parameter and sub-module bookkeeping."""

    def forward(self, *args: Any, **kwargs: Any) -> Any:
        raise NotImplementedError

    def __call__(self, *args: Any, **kwargs: Any) -> Any:
        out = self.forward(*args, **kwargs)
        recorder = _recorder.get()
        if recorder is not None:
            recorder.offer(self, out)
        return out

    def _children(self) -> Iterator[Tuple[str, Any]]:
        for name, value in vars(self).items():
            if not name.startswith("_"):
                yield name, value

    def named_parameters(self, prefix: str = "") -> Iterator[Tuple[str, Parameter]]:
        for name, value in self._children():
            path = f"{prefix}{name}"
            if isinstance(value, Parameter):
                yield path, value
            elif isinstance(value, Module):
                yield from value.named_parameters(f"{path}.")

    def named_modules(self, prefix: str = "") -> Iterator[Tuple[str, "Module"]]:
        for name, value in self._children():
            if isinstance(value, Module):
                path = f"{prefix}{name}"
                yield path, value
                yield from value.named_modules(f"{path}.")

    def parameters(self) -> List[Parameter]:
        return [p for _, p in self.named_parameters()]

    def num_parameters(self) -> int:
        return sum(p.size for p in self.parameters())

    def zero_grad(self) -> None:
        for p in self.parameters():
            p.grad = None

    def state_dict(self) -> Dict[str, np.ndarray]:
        return {name: p.data.copy() for name, p in self.named_parameters()}

    def load_state_dict(self, state: Dict[str, np.ndarray]) -> None:
        """
        Replace parameter data by name.

        Raises:
            ConfigError: On missing or unexpected names or shape mismatches
        """
        own = dict(self.named_parameters())
        missing = sorted(set(own) - set(state))
        unexpected = sorted(set(state) - set(own))
        if missing or unexpected:
            raise ConfigError(f"parameter names differ: missing={missing[:5]} unexpected={unexpected[:5]}")
        for name, param in own.items():
            value = np.asarray(state[name])
            if value.shape != param.shape:
                raise ConfigError(f"parameter {name}: checkpoint shape {value.shape} != model shape {param.shape}")
            param.data = value.astype(param.dtype, copy=True)

    def to(self, dtype: np.dtype) -> "Module":
        for p in self.parameters():
            p.data = p.data.astype(dtype)
            p.grad = None
        return self


class ModuleList(Module):
    """Ordered children named by index."""

    def __init__(self, modules: Iterable[Module] = ()):
        self._items: List[Module] = list(modules)

    def _children(self) -> Iterator[Tuple[str, Any]]:
        for i, module in enumerate(self._items):
            yield str(i), module

    def __iter__(self) -> Iterator[Module]:
        return iter(self._items)

    def __len__(self) -> int:
        return len(self._items)

    def __getitem__(self, index: int) -> Module:
        return self._items[index]


@contextlib.contextmanager
def record_activations(model: Module, paths: Sequence[str]) -> Iterator[Dict[str, Tensor]]:
    """
    Capture the outputs of the named sub-modules during forward passes.

    The captured tensors retain their gradients, so after backward() each
    `activations[path].grad` holds dL/d(activation).

    Args:
        model: Root module
        paths: Dotted module paths

    Yields:
        Dict filled with path -> activation as the forward pass runs

    Raises:
        ConfigError: If a path does not name a sub-module
    """
    modules = dict(model.named_modules())
    unknown = [p for p in paths if p not in modules]
    if unknown:
        raise ConfigError(f"unknown layer path(s): {', '.join(unknown)}")
    recorder = _ActivationRecorder({id(modules[p]): p for p in paths})
    token = _recorder.set(recorder)
    try:
        yield recorder.activations
    finally:
        _recorder.reset(token)


def kaiming_uniform(shape: Tuple[int, ...], fan_in: int, rng: np.random.Generator, dtype: np.dtype) -> np.ndarray:
    """He/Kaiming uniform initialisation for ReLU networks: U(−√(6/fan_in), √(6/fan_in))."""
    bound = math.sqrt(6.0 / fan_in)
    return rng.uniform(-bound, bound, size=shape).astype(dtype)


class Conv2d(Module):
    def __init__(
        self,
        in_channels: int,
        out_channels: int,
        kernel_size: int,
        rng: np.random.Generator,
        stride: int = 1,
        padding: int = 0,
        dtype: np.dtype = np.float32,
    ):
        shape = (out_channels, in_channels, kernel_size, kernel_size)
        self.weight = Parameter(kaiming_uniform(shape, in_channels * kernel_size**2, rng, dtype))
        self.bias = Parameter(np.zeros(out_channels, dtype=dtype))
        self.stride, self.padding = stride, padding

    def forward(self, x: Tensor) -> Tensor:
        return F.conv2d(x, self.weight, self.bias, stride=self.stride, padding=self.padding)


class SeparableConv2d(Module):
    """Depthwise k×k per channel, then 1×1 pointwise mixing; one bias after the pointwise stage."""

    def __init__(
        self,
        in_channels: int,
        out_channels: int,
        rng: np.random.Generator,
        kernel_size: int = 3,
        stride: int = 1,
        padding: int = 1,
        dtype: np.dtype = np.float32,
    ):
        separable = in_channels * kernel_size**2 + out_channels * in_channels
        full = out_channels * in_channels * kernel_size**2
        if separable >= full:
            raise ConfigError(
                f"separable conv {in_channels}->{out_channels} k={kernel_size} has {separable} weights, "
                f"not fewer than the {full} of a full convolution"
            )
        self.depthwise = Parameter(
            kaiming_uniform((in_channels, 1, kernel_size, kernel_size), kernel_size**2, rng, dtype)
        )
        self.pointwise = Parameter(kaiming_uniform((out_channels, in_channels, 1, 1), in_channels, rng, dtype))
        self.bias = Parameter(np.zeros(out_channels, dtype=dtype))
        self.stride, self.padding = stride, padding

    def forward(self, x: Tensor) -> Tensor:
        return F.separable_conv2d(
            x, self.depthwise, self.pointwise, self.bias, stride=self.stride, padding=self.padding
        )


class ConvTranspose2d(Module):
    def __init__(
        self,
        in_channels: int,
        out_channels: int,
        kernel_size: int,
        rng: np.random.Generator,
        stride: int = 1,
        padding: int = 0,
        output_padding: int = 0,
        dtype: np.dtype = np.float32,
    ):
        shape = (in_channels, out_channels, kernel_size, kernel_size)
        self.weight = Parameter(kaiming_uniform(shape, out_channels * kernel_size**2, rng, dtype))
        self.bias = Parameter(np.zeros(out_channels, dtype=dtype))
        self.stride, self.padding, self.output_padding = stride, padding, output_padding

    def forward(self, x: Tensor) -> Tensor:
        return F.conv_transpose2d(
            x,
            self.weight,
            self.bias,
            stride=self.stride,
            padding=self.padding,
            output_padding=self.output_padding,
        )


def check_channels(x: Tensor, expected: int, where: str) -> None:
    if x.ndim != 4 or x.shape[1] != expected:
        raise ShapeError(f"{where}: expected N×{expected}×H×W input, got {x.shape}")
