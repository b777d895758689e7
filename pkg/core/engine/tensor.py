"""
Tensor

Dense float array with reverse-mode differentiation. Each non-leaf tensor
remembers its parents and a closure mapping the upstream gradient to one
gradient per parent. Leaf tensors with requires_grad accumulate into .grad.
"""

from contextlib import contextmanager
from typing import Callable, Iterator, List, Optional, Sequence, Tuple

import numpy as np

from core.errors import GraphError, ShapeError


DEFAULT_DTYPE = np.float32
FLOAT_DTYPES = (np.dtype(np.float32), np.dtype(np.float64))

BackwardFn = Callable[[np.ndarray], Sequence[Optional[np.ndarray]]]

_grad_enabled = True


@contextmanager
def no_grad() -> Iterator[None]:
    """Operations inside the block record no graph."""
    global _grad_enabled
    previous = _grad_enabled
    _grad_enabled = False
    try:
        yield
    finally:
        _grad_enabled = previous


def _reduce_to(grad: np.ndarray, shape: Tuple[int, ...]) -> np.ndarray:
    # Only scalar broadcasting exists, so a shape mismatch means a 0-d operand
    if grad.shape == shape:
        return grad
    return np.asarray(grad.sum(), dtype=grad.dtype).reshape(shape)


class Tensor:
    """
    n-dimensional float32/float64 array participating in autodiff.

    Args:
        data: Array-like values
        requires_grad: Track gradients for this leaf
        dtype: float32 (default) or float64
    """

    def __init__(self, data, requires_grad: bool = False, dtype=None):
        array = np.asarray(data)
        if dtype is None:
            dtype = array.dtype if array.dtype in FLOAT_DTYPES else DEFAULT_DTYPE
        if np.dtype(dtype) not in FLOAT_DTYPES:
            raise TypeError(f"unsupported tensor dtype {np.dtype(dtype)}")
        self.data: np.ndarray = np.ascontiguousarray(array, dtype=dtype)
        self.requires_grad = bool(requires_grad)
        self.grad: Optional[np.ndarray] = None
        self.op = "leaf"
        self._parents: Tuple["Tensor", ...] = ()
        self._backward: Optional[BackwardFn] = None
        self._consumed = False

    @classmethod
    def from_op(
        cls,
        data: np.ndarray,
        parents: Sequence["Tensor"],
        backward: BackwardFn,
        op: str,
    ) -> "Tensor":
        """Wrap an op result, recording the graph edge when needed."""
        out = cls(data, dtype=data.dtype)
        if _grad_enabled and any(p.requires_grad for p in parents):
            out.requires_grad = True
            out.op = op
            out._parents = tuple(parents)
            out._backward = backward
        return out

    # Properties

    @property
    def shape(self) -> Tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    @property
    def dtype(self) -> np.dtype:
        return self.data.dtype

    @property
    def is_leaf(self) -> bool:
        return self._backward is None

    def __repr__(self) -> str:
        grad = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}, dtype={self.dtype}{grad})"

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data.reshape(-1)[0]) if self.data.size == 1 else float(self.data)

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def zero_grad(self) -> None:
        self.grad = None

    # Arithmetic (same shape, or one scalar operand)

    def _operand(self, other, op: str) -> "Tensor":
        if isinstance(other, Tensor):
            if other.shape != self.shape and other.ndim != 0 and self.ndim != 0:
                raise ShapeError(
                    f"{op}: shapes {self.shape} and {other.shape} differ "
                    "(only scalar broadcasting is supported)"
                )
            return other
        return Tensor(np.asarray(other, dtype=self.dtype))

    def __add__(self, other) -> "Tensor":
        other = self._operand(other, "add")
        a_shape, b_shape = self.shape, other.shape

        def backward(g):
            return _reduce_to(g, a_shape), _reduce_to(g, b_shape)

        return Tensor.from_op(self.data + other.data, (self, other), backward, "add")

    __radd__ = __add__

    def __sub__(self, other) -> "Tensor":
        other = self._operand(other, "sub")
        a_shape, b_shape = self.shape, other.shape

        def backward(g):
            return _reduce_to(g, a_shape), _reduce_to(-g, b_shape)

        return Tensor.from_op(self.data - other.data, (self, other), backward, "sub")

    def __rsub__(self, other) -> "Tensor":
        return self._operand(other, "sub") - self

    def __mul__(self, other) -> "Tensor":
        other = self._operand(other, "mul")
        a, b = self.data, other.data

        def backward(g):
            return _reduce_to(g * b, a.shape), _reduce_to(g * a, b.shape)

        return Tensor.from_op(a * b, (self, other), backward, "mul")

    __rmul__ = __mul__

    def __truediv__(self, scalar: float) -> "Tensor":
        if isinstance(scalar, Tensor):
            raise ShapeError("division is only defined by a Python scalar")
        return self * (1.0 / scalar)

    def __neg__(self) -> "Tensor":
        return Tensor.from_op(-self.data, (self,), lambda g: (-g,), "neg")

    def __pow__(self, exponent: float) -> "Tensor":
        x = self.data
        p = float(exponent)

        def backward(g):
            return (g * (p * x ** (p - 1.0)).astype(x.dtype),)

        return Tensor.from_op(x ** p, (self,), backward, "pow")

    # Reductions and views

    def sum(self) -> "Tensor":
        shape, dtype = self.shape, self.dtype

        def backward(g):
            return (np.full(shape, g, dtype=dtype),)

        return Tensor.from_op(np.asarray(self.data.sum(), dtype=dtype), (self,), backward, "sum")

    def mean(self) -> "Tensor":
        return self.sum() * (1.0 / self.size)

    def reshape(self, *shape) -> "Tensor":
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        original = self.shape
        try:
            data = self.data.reshape(shape)
        except ValueError as exc:
            raise ShapeError(f"cannot reshape {original} into {shape}") from exc
        return Tensor.from_op(data, (self,), lambda g: (g.reshape(original),), "reshape")

    def flatten(self) -> "Tensor":
        """Collapse every axis after the first (batch) axis."""
        return self.reshape(self.shape[0], -1)

    # Differentiation

    def backward(self) -> None:
        """
        Populate .grad on every reachable leaf with d(self)/d(leaf).

        Raises:
            GraphError: non-scalar output, output without graph, or a graph
                that a previous backward() already consumed
        """
        if self.data.size != 1:
            raise GraphError(f"backward() needs a scalar, got shape {self.shape}")
        if self._consumed:
            raise GraphError("graph already consumed by a previous backward(); rerun the forward pass")
        if not self.requires_grad:
            raise GraphError("backward() on a tensor that does not require grad")

        order = _topological_order(self)
        pending = {id(self): np.ones_like(self.data)}

        for node in reversed(order):
            grad = pending.pop(id(node), None)
            if grad is None:
                continue
            if node.is_leaf:
                if node.requires_grad:
                    node.grad = grad.copy() if node.grad is None else node.grad + grad
                continue
            for parent, parent_grad in zip(node._parents, node._backward(grad)):
                if parent_grad is None or not parent.requires_grad:
                    continue
                key = id(parent)
                if key in pending:
                    pending[key] = pending[key] + parent_grad
                else:
                    pending[key] = parent_grad

        for node in order:
            if not node.is_leaf:
                node._backward = None
                node._parents = ()
                node._consumed = True


def _topological_order(root: Tensor) -> List[Tensor]:
    # Iterative post-order; graphs are deep enough to hit recursion limits
    order: List[Tensor] = []
    visited = set()
    stack = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in visited:
            continue
        visited.add(id(node))
        stack.append((node, True))
        for parent in node._parents:
            if id(parent) not in visited:
                stack.append((parent, False))
    return order


class Parameter(Tensor):
    """Trainable leaf tensor with a dotted name inside its model bundle."""

    def __init__(self, data, name: str = "", dtype=None):
        super().__init__(data, requires_grad=True, dtype=dtype)
        self.name = name

    def __repr__(self) -> str:
        return f"Parameter({self.name!r}, shape={self.shape}, dtype={self.dtype})"
