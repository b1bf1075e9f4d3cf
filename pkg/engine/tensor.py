"""
Dense tensor with reverse-mode automatic differentiation.

A `Tensor` wraps a numpy array. Every differentiable operation is a `Function`
subclass; applying one records the function as the creator of its output so
`Tensor.backward()` can walk the graph in reverse topological order.
"""

import contextlib
import contextvars
from typing import Any, Iterator, List, Optional, Sequence, Tuple, Union

import numpy as np

from utils.errors import NumericError, ShapeError

ArrayLike = Union[np.ndarray, float, int, Sequence[Any]]

_grad_enabled: contextvars.ContextVar[bool] = contextvars.ContextVar("grad_enabled", default=True)


@contextlib.contextmanager
def no_grad() -> Iterator[None]:
    """Disable graph recording inside the block (inference, oracles, optimizer updates)."""
    token = _grad_enabled.set(False)
    try:
        yield
    finally:
        _grad_enabled.reset(token)


def is_grad_enabled() -> bool:
    return _grad_enabled.get()


def _as_float_array(data: ArrayLike, dtype: Optional[np.dtype]) -> np.ndarray:
    if dtype is not None:
        return np.asarray(data, dtype=dtype)
    arr = np.asarray(data)
    if arr.dtype not in (np.float32, np.float64):
        arr = arr.astype(np.float32)
    return arr


class Function:
    """
    Base class for differentiable operations.

    Subclasses implement `forward` on raw arrays and `backward`, which receives
    dL/d(output) and returns one gradient array (or None) per tensor input.
    """

    def __init__(self, *inputs: "Tensor"):
        self.inputs = inputs
        self.needs_input_grad = tuple(t.requires_grad for t in inputs)

    def forward(self, *arrays: np.ndarray, **kwargs: Any) -> np.ndarray:
        raise NotImplementedError(f"{type(self).__name__} has no forward pass")

    def backward(self, grad: np.ndarray) -> Tuple[Optional[np.ndarray], ...]:
        raise NotImplementedError(f"{type(self).__name__} has no backward pass")

    @classmethod
    def apply(cls, *inputs: "Tensor", **kwargs: Any) -> "Tensor":
        """
        Run the forward pass and, when gradients are needed, record the node.

        Args:
            *inputs: Tensor inputs
            **kwargs: Non-tensor arguments forwarded to `forward`

        Returns:
            Output tensor

        Raises:
            NumericError: If the forward pass produced NaN or Inf
        """
        fn = cls(*inputs)
        out = fn.forward(*(t.data for t in inputs), **kwargs)
        if not np.all(np.isfinite(out)):
            raise NumericError(f"{cls.__name__} produced non-finite values")
        requires_grad = is_grad_enabled() and any(fn.needs_input_grad)
        return Tensor(out, requires_grad=requires_grad, _creator=fn if requires_grad else None)

    @staticmethod
    def unbroadcast(grad: np.ndarray, shape: Tuple[int, ...]) -> np.ndarray:
        """Sum out broadcast dimensions so `grad` matches `shape`."""
        if grad.shape == shape:
            return grad
        while grad.ndim > len(shape):
            grad = grad.sum(axis=0)
        for axis, extent in enumerate(shape):
            if extent == 1 and grad.shape[axis] != 1:
                grad = grad.sum(axis=axis, keepdims=True)
        return grad


class Tensor:
    """
    N-dimensional float32/float64 array with an optional gradient buffer.

    Tensors are treated as immutable once they take part in a recorded graph;
    optimizers replace `data` instead of writing into it.
    """

    __array_priority__ = 1000

    def __init__(
        self,
        data: ArrayLike,
        requires_grad: bool = False,
        dtype: Optional[np.dtype] = None,
        _creator: Optional[Function] = None,
    ):
        self.data = _as_float_array(data, dtype)
        self.requires_grad = requires_grad
        self.grad: Optional[np.ndarray] = None
        self._creator = _creator
        self._retain_grad = False

    # ---- properties -------------------------------------------------------

    @property
    def shape(self) -> Tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def dtype(self) -> np.dtype:
        return self.data.dtype

    @property
    def size(self) -> int:
        return int(self.data.size)

    @property
    def is_leaf(self) -> bool:
        return self._creator is None

    def __repr__(self) -> str:
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}, dtype={self.dtype}{flag})"

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data.reshape(-1)[0]) if self.size == 1 else float(self.data)

    def detach(self) -> "Tensor":
        return Tensor(self.data, requires_grad=False)

    def retain_grad(self) -> "Tensor":
        """Keep the gradient of this non-leaf tensor after backward()."""
        self._retain_grad = True
        return self

    def zero_grad(self) -> None:
        self.grad = None

    # ---- autodiff ---------------------------------------------------------

    def backward(self, grad: Optional[ArrayLike] = None) -> None:
        """
        Backpropagate from this tensor.

        Leaves with requires_grad accumulate into `.grad`; intermediate tensors
        get `.grad` only when `retain_grad()` was called on them.

        Args:
            grad: dL/d(self); defaults to 1 for a scalar tensor

        Raises:
            ShapeError: If grad is omitted for a non-scalar tensor or mis-shaped
        """
        if not self.requires_grad:
            raise ShapeError("backward() called on a tensor that does not require grad")
        if grad is None:
            if self.size != 1:
                raise ShapeError(f"backward() needs an explicit gradient for shape {self.shape}")
            seed = np.ones_like(self.data)
        else:
            seed = np.asarray(grad, dtype=self.dtype)
            if seed.shape != self.shape:
                raise ShapeError(f"gradient shape {seed.shape} does not match tensor shape {self.shape}")
        Graph.from_root(self).backward(seed)

    # ---- operators --------------------------------------------------------

    def _lift(self, other: ArrayLike) -> "Tensor":
        if isinstance(other, Tensor):
            return other
        return Tensor(np.asarray(other, dtype=self.dtype))

    def __add__(self, other: ArrayLike) -> "Tensor":
        return ops.Add.apply(self, self._lift(other))

    def __radd__(self, other: ArrayLike) -> "Tensor":
        return ops.Add.apply(self._lift(other), self)

    def __sub__(self, other: ArrayLike) -> "Tensor":
        return ops.Sub.apply(self, self._lift(other))

    def __rsub__(self, other: ArrayLike) -> "Tensor":
        return ops.Sub.apply(self._lift(other), self)

    def __mul__(self, other: ArrayLike) -> "Tensor":
        return ops.Mul.apply(self, self._lift(other))

    def __rmul__(self, other: ArrayLike) -> "Tensor":
        return ops.Mul.apply(self._lift(other), self)

    def __truediv__(self, other: ArrayLike) -> "Tensor":
        return ops.Div.apply(self, self._lift(other))

    def __rtruediv__(self, other: ArrayLike) -> "Tensor":
        return ops.Div.apply(self._lift(other), self)

    def __neg__(self) -> "Tensor":
        return ops.Neg.apply(self)

    def __matmul__(self, other: "Tensor") -> "Tensor":
        return ops.MatMul.apply(self, self._lift(other))

    def reshape(self, *shape: int) -> "Tensor":
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return ops.Reshape.apply(self, shape=tuple(shape))

    def transpose(self, *axes: int) -> "Tensor":
        if len(axes) == 1 and isinstance(axes[0], (tuple, list)):
            axes = tuple(axes[0])
        return ops.Transpose.apply(self, axes=tuple(axes) if axes else None)

    def sum(self, axis: Union[int, Tuple[int, ...], None] = None, keepdims: bool = False) -> "Tensor":
        return ops.Sum.apply(self, axis=axis, keepdims=keepdims)

    def mean(self, axis: Union[int, Tuple[int, ...], None] = None, keepdims: bool = False) -> "Tensor":
        return ops.Mean.apply(self, axis=axis, keepdims=keepdims)

    def relu(self) -> "Tensor":
        return ops.ReLU.apply(self)

    def sigmoid(self) -> "Tensor":
        return ops.Sigmoid.apply(self)

    def softplus(self) -> "Tensor":
        return ops.Softplus.apply(self)

    def softmax(self, axis: int = -1) -> "Tensor":
        return ops.Softmax.apply(self, axis=axis)


class Graph:
    """Topologically ordered record of the operations that produced a root tensor."""

    def __init__(self, nodes: List[Tensor]):
        self.nodes = nodes

    @classmethod
    def from_root(cls, root: Tensor) -> "Graph":
        """Collect every grad-requiring tensor reachable from `root`, inputs before outputs."""
        order: List[Tensor] = []
        visited = set()
        stack: List[Tuple[Tensor, bool]] = [(root, False)]
        while stack:
            node, expanded = stack.pop()
            if id(node) in visited:
                continue
            if expanded:
                visited.add(id(node))
                order.append(node)
                continue
            stack.append((node, True))
            if node._creator is not None:
                for parent in node._creator.inputs:
                    if parent.requires_grad and id(parent) not in visited:
                        stack.append((parent, False))
        return cls(order)

    def backward(self, seed: np.ndarray) -> None:
        """Visit nodes once each in reverse topological order, propagating gradients."""
        grads = {id(self.nodes[-1]): seed}
        for node in reversed(self.nodes):
            grad = grads.pop(id(node), None)
            if grad is None:
                continue
            if node.is_leaf or node._retain_grad:
                node.grad = grad.copy() if node.grad is None else node.grad + grad
            fn = node._creator
            if fn is None:
                continue
            input_grads = fn.backward(grad)
            if not isinstance(input_grads, tuple):
                input_grads = (input_grads,)
            for parent, needed, g in zip(fn.inputs, fn.needs_input_grad, input_grads):
                if not needed or g is None:
                    continue
                key = id(parent)
                grads[key] = g if key not in grads else grads[key] + g


def as_tensor(data: Union[Tensor, ArrayLike], dtype: Optional[np.dtype] = None) -> Tensor:
    """Wrap arrays and scalars as constant tensors; pass tensors through."""
    if isinstance(data, Tensor):
        return data
    return Tensor(data, dtype=dtype)


from engine import ops  # noqa: E402  (ops subclasses Function defined above)
