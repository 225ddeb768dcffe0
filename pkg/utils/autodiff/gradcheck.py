"""Central finite-difference gradients for checking autodiff results."""

from typing import Callable, Iterable, Optional, Tuple

import numpy as np

from utils.autodiff.tensor import Tensor, no_grad


def numerical_gradient(
    loss_fn: Callable[[], Tensor],
    param: Tensor,
    h: float = 1e-4,
    indices: Optional[Iterable[Tuple[int, ...]]] = None,
) -> np.ndarray:
    """
    Estimate d loss / d param by central differences.

    The parameter is perturbed in place and restored afterwards.

    Args:
        loss_fn: Zero-argument closure recomputing the scalar loss
        param: Tensor to perturb
        h: Perturbation size
        indices: Optional coordinates to check; others are left as NaN

    Returns:
        Array shaped like `param` with the estimated partial derivatives
    """
    grad = np.full(param.shape, np.nan) if indices is not None else np.zeros(param.shape)
    coords = list(indices) if indices is not None else list(np.ndindex(*param.shape))
    original = param.data
    with no_grad():
        for coord in coords:
            plus = original.copy()
            plus[coord] += h
            param.data = plus
            loss_plus = loss_fn().item()
            minus = original.copy()
            minus[coord] -= h
            param.data = minus
            loss_minus = loss_fn().item()
            grad[coord] = (loss_plus - loss_minus) / (2.0 * h)
    param.data = original
    return grad


def relative_error(analytic: np.ndarray, numeric: np.ndarray, floor: float = 1e-8) -> float:
    """Max over coordinates of |a - n| / max(|a| + |n|, floor)."""
    mask = ~np.isnan(numeric)
    a, n = analytic[mask], numeric[mask]
    return float(np.max(np.abs(a - n) / np.maximum(np.abs(a) + np.abs(n), floor)))
