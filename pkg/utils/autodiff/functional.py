"""Differentiable operations on `Tensor`.

No broadcasting is performed beyond scalar x tensor; shape disagreements raise
`ShapeError` naming both shapes.
"""

from typing import Sequence, Union

import numpy as np

from utils.autodiff.tensor import ShapeError, Tensor, make_result

Operand = Union[Tensor, float, int]


def as_tensor(value: Operand) -> Tensor:
    if isinstance(value, Tensor):
        return value
    return Tensor(value)


def _is_scalar(t: Tensor) -> bool:
    return t.size == 1 and t.data.ndim <= 1


def _reduce_to(grad: np.ndarray, target: Tensor) -> np.ndarray:
    """Sum a full-shape gradient down to a scalar operand's shape."""
    if grad.shape == target.shape:
        return grad
    return np.full(target.shape, grad.sum())


def _check_elementwise(a: Tensor, b: Tensor, op: str) -> None:
    if a.shape == b.shape or _is_scalar(a) or _is_scalar(b):
        return
    raise ShapeError(f"{op}: shape mismatch between {a.shape} and {b.shape}")


def add(a: Operand, b: Operand) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _check_elementwise(a, b, "add")
    value = a.data + b.data

    def backward_fn(grad):
        return _reduce_to(grad, a), _reduce_to(grad, b)

    return make_result(value, (a, b), backward_fn, "add")


def sub(a: Operand, b: Operand) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _check_elementwise(a, b, "sub")
    value = a.data - b.data

    def backward_fn(grad):
        return _reduce_to(grad, a), _reduce_to(-grad, b)

    return make_result(value, (a, b), backward_fn, "sub")


def mul(a: Operand, b: Operand) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _check_elementwise(a, b, "mul")
    value = a.data * b.data

    def backward_fn(grad):
        return _reduce_to(grad * b.data, a), _reduce_to(grad * a.data, b)

    return make_result(value, (a, b), backward_fn, "mul")


def elementwise(a: Operand, b: Operand, op: str) -> Tensor:
    """Dispatch to add/sub/mul by name."""
    ops = {"add": add, "sub": sub, "mul": mul}
    if op not in ops:
        raise ValueError(f"Unknown elementwise op '{op}', expected one of {sorted(ops)}")
    return ops[op](a, b)


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """[m x k] @ [k x n] -> [m x n]."""
    if a.data.ndim != 2 or b.data.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul: incompatible shapes {a.shape} and {b.shape}")
    value = a.data @ b.data

    def backward_fn(grad):
        return grad @ b.data.T, a.data.T @ grad

    return make_result(value, (a, b), backward_fn, "matmul")


def transpose(x: Tensor) -> Tensor:
    if x.data.ndim != 2:
        raise ShapeError(f"transpose: expected a matrix, got shape {x.shape}")

    def backward_fn(grad):
        return (grad.T,)

    return make_result(x.data.T.copy(), (x,), backward_fn, "transpose")


def reshape(x: Tensor, shape: Sequence[int]) -> Tensor:
    value = x.data.reshape(tuple(shape))

    def backward_fn(grad):
        return (grad.reshape(x.shape),)

    return make_result(value.copy(), (x,), backward_fn, "reshape")


def silu(x: Tensor) -> Tensor:
    """x * sigmoid(x), computed without overflow for large |x|."""
    sig = _sigmoid(x.data)
    value = x.data * sig

    def backward_fn(grad):
        return (grad * (sig + x.data * sig * (1.0 - sig)),)

    return make_result(value, (x,), backward_fn, "silu")


def _sigmoid(values: np.ndarray) -> np.ndarray:
    out = np.empty_like(values)
    positive = values >= 0
    out[positive] = 1.0 / (1.0 + np.exp(-values[positive]))
    exp_v = np.exp(values[~positive])
    out[~positive] = exp_v / (1.0 + exp_v)
    return out


def softmax_rows(x: Tensor) -> Tensor:
    """Row-wise softmax stabilized by row-max subtraction."""
    if x.data.ndim != 2:
        raise ShapeError(f"softmax_rows: expected a matrix, got shape {x.shape}")
    shifted = x.data - x.data.max(axis=1, keepdims=True)
    exp_v = np.exp(shifted)
    value = exp_v / exp_v.sum(axis=1, keepdims=True)

    def backward_fn(grad):
        inner = (grad * value).sum(axis=1, keepdims=True)
        return (value * (grad - inner),)

    return make_result(value, (x,), backward_fn, "softmax_rows")


def sum_all(x: Tensor) -> Tensor:
    def backward_fn(grad):
        return (np.full(x.shape, float(grad.reshape(-1)[0])),)

    return make_result(np.array(x.data.sum()), (x,), backward_fn, "sum")


def mean_all(x: Tensor) -> Tensor:
    count = x.size

    def backward_fn(grad):
        return (np.full(x.shape, float(grad.reshape(-1)[0]) / count),)

    return make_result(np.array(x.data.mean()), (x,), backward_fn, "mean")


def mse(a: Tensor, b: Tensor) -> Tensor:
    """Mean of squared differences; the squared-norm loss form of the noise objectives."""
    if a.shape != b.shape:
        raise ShapeError(f"mse: shape mismatch between {a.shape} and {b.shape}")
    diff = a.data - b.data
    count = diff.size

    def backward_fn(grad):
        scale = float(grad.reshape(-1)[0]) * 2.0 / count
        return scale * diff, -scale * diff

    return make_result(np.array(np.mean(diff * diff)), (a, b), backward_fn, "mse")


def stop_gradient(x: Tensor) -> Tensor:
    """Value-identical tensor through which no adjoint flows."""
    return Tensor(x.data.copy(), _op="stop_gradient")


def take_rows(x: Tensor, indices: Sequence[int]) -> Tensor:
    """Gather rows of a matrix; gradients scatter-add back."""
    if x.data.ndim != 2:
        raise ShapeError(f"take_rows: expected a matrix, got shape {x.shape}")
    idx = np.asarray(indices, dtype=np.int64)
    value = x.data[idx]

    def backward_fn(grad):
        full = np.zeros_like(x.data)
        np.add.at(full, idx, grad)
        return (full,)

    return make_result(value, (x,), backward_fn, "take_rows")


def concat_rows(tensors: Sequence[Tensor]) -> Tensor:
    """Stack matrices (or row vectors) with equal column counts vertically."""
    if not tensors:
        raise ShapeError("concat_rows: no tensors given")
    mats = [t.data.reshape(1, -1) if t.data.ndim == 1 else t.data for t in tensors]
    widths = {m.shape[1] for m in mats}
    if len(widths) != 1:
        raise ShapeError(f"concat_rows: column mismatch among shapes {[t.shape for t in tensors]}")
    value = np.concatenate(mats, axis=0)
    bounds = np.cumsum([0] + [m.shape[0] for m in mats])

    def backward_fn(grad):
        return tuple(
            grad[bounds[i]:bounds[i + 1]].reshape(t.shape) for i, t in enumerate(tensors)
        )

    return make_result(value, tuple(tensors), backward_fn, "concat_rows")


def repeat_rows(row: Tensor, count: int) -> Tensor:
    """Tile a [1 x n] row `count` times as ones[count x 1] @ row."""
    if row.data.ndim != 2 or row.shape[0] != 1:
        raise ShapeError(f"repeat_rows: expected a [1 x n] row, got shape {row.shape}")
    return matmul(Tensor(np.ones((count, 1))), row)


def linear(x: Tensor, weight: Tensor, bias: Tensor) -> Tensor:
    """x @ W + b with the bias row tiled over the batch."""
    return add(matmul(x, weight), repeat_rows(bias, x.shape[0]))


def cross_entropy(logits: Tensor, labels: Sequence[int]) -> Tensor:
    """Mean softmax cross-entropy of integer class labels."""
    if logits.data.ndim != 2:
        raise ShapeError(f"cross_entropy: expected [batch x classes] logits, got {logits.shape}")
    labels = np.asarray(labels, dtype=np.int64)
    if labels.shape != (logits.shape[0],):
        raise ShapeError(f"cross_entropy: {labels.shape[0]} labels for logits of shape {logits.shape}")
    shifted = logits.data - logits.data.max(axis=1, keepdims=True)
    log_norm = np.log(np.exp(shifted).sum(axis=1, keepdims=True))
    log_probs = shifted - log_norm
    rows = np.arange(labels.shape[0])
    value = -log_probs[rows, labels].mean()

    def backward_fn(grad):
        probs = np.exp(log_probs)
        probs[rows, labels] -= 1.0
        return (probs * float(grad.reshape(-1)[0]) / labels.shape[0],)

    return make_result(np.array(value), (logits,), backward_fn, "cross_entropy")
