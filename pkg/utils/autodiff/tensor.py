"""Dense float64 tensor with reverse-mode automatic differentiation."""

import hashlib
import threading
from contextlib import contextmanager
from typing import Callable, Iterator, Optional, Sequence, Tuple

import numpy as np


class ShapeError(ValueError):
    """Raised when operand shapes are incompatible."""


class NonFiniteError(FloatingPointError):
    """Raised when an operation produces NaN or Inf from finite inputs."""


_grad_state = threading.local()


def is_grad_enabled() -> bool:
    """Return whether new operations record the graph."""
    return getattr(_grad_state, "enabled", True)


@contextmanager
def no_grad() -> Iterator[None]:
    """Disable graph recording inside the block (read-only evaluation)."""
    previous = is_grad_enabled()
    _grad_state.enabled = False
    try:
        yield
    finally:
        _grad_state.enabled = previous


BackwardFn = Callable[[np.ndarray], Sequence[Optional[np.ndarray]]]


class Tensor:
    """
    A dense n-dimensional array of 64-bit reals participating in reverse-mode
    differentiation.

    Values are treated as immutable once created; only `grad` buffers and
    optimizer-updated parameters change in place.

    Args:
        data: Array-like values (copied and cast to float64)
        requires_grad: Whether gradients should be accumulated for this tensor
        name: Optional parameter name used in error messages
    """

    def __init__(
        self,
        data,
        requires_grad: bool = False,
        name: Optional[str] = None,
        _parents: Tuple["Tensor", ...] = (),
        _backward: Optional[BackwardFn] = None,
        _op: str = "leaf",
    ):
        array = np.array(data, dtype=np.float64)
        if any(dim <= 0 for dim in array.shape):
            raise ShapeError(f"Tensor shape must be positive in every dimension, got {array.shape}")
        self.data = array
        self.requires_grad = requires_grad
        self.name = name
        self.grad: Optional[np.ndarray] = None
        self._parents = _parents
        self._backward = _backward
        self._op = _op

    @property
    def shape(self) -> Tuple[int, ...]:
        return self.data.shape

    @property
    def size(self) -> int:
        return int(self.data.size)

    @property
    def is_leaf(self) -> bool:
        return not self._parents

    def item(self) -> float:
        if self.size != 1:
            raise ShapeError(f"item() requires a single-element tensor, got shape {self.shape}")
        return float(self.data.reshape(-1)[0])

    def numpy(self) -> np.ndarray:
        """Return a copy of the values."""
        return self.data.copy()

    def detach(self) -> "Tensor":
        """Return a constant copy that does not track gradients."""
        return Tensor(self.data.copy())

    def zero_grad(self) -> None:
        self.grad = None

    def checksum(self) -> str:
        """SHA-256 over shape and little-endian bytes."""
        digest = hashlib.sha256()
        digest.update(str(self.shape).encode("utf-8"))
        digest.update(np.ascontiguousarray(self.data, dtype="<f8").tobytes())
        return digest.hexdigest()

    def backward(self) -> None:
        backward(self)

    def __repr__(self) -> str:
        label = f", name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.shape}, op={self._op}, requires_grad={self.requires_grad}{label})"

    # Operator sugar delegates to the functional ops
    def __add__(self, other):
        from utils.autodiff import functional as F
        return F.add(self, other)

    def __radd__(self, other):
        from utils.autodiff import functional as F
        return F.add(self, other)

    def __sub__(self, other):
        from utils.autodiff import functional as F
        return F.sub(self, other)

    def __rsub__(self, other):
        from utils.autodiff import functional as F
        return F.sub(other, self)

    def __mul__(self, other):
        from utils.autodiff import functional as F
        return F.mul(self, other)

    def __rmul__(self, other):
        from utils.autodiff import functional as F
        return F.mul(self, other)

    def __neg__(self):
        from utils.autodiff import functional as F
        return F.mul(self, -1.0)

    def __matmul__(self, other):
        from utils.autodiff import functional as F
        return F.matmul(self, other)


def make_result(
    value: np.ndarray,
    parents: Tuple[Tensor, ...],
    backward_fn: BackwardFn,
    op: str,
) -> Tensor:
    """Wrap an op result, checking finiteness and recording the graph edge."""
    if not np.all(np.isfinite(value)):
        raise NonFiniteError(f"Operation '{op}' produced non-finite values")
    track = is_grad_enabled() and any(p.requires_grad for p in parents)
    if not track:
        return Tensor(value, _op=op)
    return Tensor(value, requires_grad=True, _parents=parents, _backward=backward_fn, _op=op)


def _topological_order(root: Tensor) -> list:
    order = []
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
            if parent.requires_grad and id(parent) not in visited:
                stack.append((parent, False))
    return order


def backward(loss: Tensor) -> None:
    """
    Accumulate d(loss)/d(x) into `x.grad` for every leaf tensor with
    requires_grad reachable from the scalar `loss`. Intermediate results keep
    no gradient.

    Repeated calls without zeroing accumulate additively.

    Raises:
        ShapeError: If the loss is not a single-element tensor
    """
    if loss.size != 1:
        raise ShapeError(f"backward() requires a scalar loss, got shape {loss.shape}")
    if not loss.requires_grad:
        return

    adjoints = {id(loss): np.ones_like(loss.data)}
    for node in reversed(_topological_order(loss)):
        adjoint = adjoints.pop(id(node), None)
        if adjoint is None:
            continue
        if node.is_leaf:
            node.grad = adjoint.copy() if node.grad is None else node.grad + adjoint
            continue
        parent_grads = node._backward(adjoint)
        for parent, grad in zip(node._parents, parent_grads):
            if grad is None or not parent.requires_grad:
                continue
            if grad.shape != parent.shape:
                raise ShapeError(
                    f"Gradient shape {grad.shape} does not match operand shape {parent.shape} "
                    f"in op '{node._op}'"
                )
            key = id(parent)
            adjoints[key] = grad if key not in adjoints else adjoints[key] + grad
