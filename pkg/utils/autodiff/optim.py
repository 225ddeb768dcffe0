"""First-order optimizers (SGD and Adam with decoupled weight decay)."""

from dataclasses import dataclass, field
from typing import Dict, Literal, Mapping, Tuple

import numpy as np

from utils.autodiff.tensor import NonFiniteError, Tensor


class MissingGradientError(RuntimeError):
    """Raised when an optimizer step finds a parameter without a gradient."""


@dataclass
class OptimizerState:
    """Hyperparameters and per-parameter moments of one optimizer."""
    kind: Literal["sgd", "adam"] = "adam"
    learning_rate: float = 1e-3
    weight_decay: float = 0.0
    betas: Tuple[float, float] = (0.9, 0.999)
    eps: float = 1e-8
    step_count: int = 0
    first_moments: Dict[str, np.ndarray] = field(default_factory=dict)
    second_moments: Dict[str, np.ndarray] = field(default_factory=dict)

    def __post_init__(self):
        """Validate configuration after initialization."""
        if self.kind not in ("sgd", "adam"):
            raise ValueError(f"Unknown optimizer kind '{self.kind}'")
        if self.learning_rate <= 0:
            raise ValueError(f"learning_rate must be positive, got {self.learning_rate}")
        if self.weight_decay < 0:
            raise ValueError(f"weight_decay must be non-negative, got {self.weight_decay}")


def optimizer_step(state: OptimizerState, params: Mapping[str, Tensor]) -> None:
    """
    Update every parameter in place from its populated gradient.

    Weight decay is decoupled (applied to the parameter, not folded into the
    gradient). Gradients are left untouched; callers zero them.

    Args:
        state: Optimizer state, mutated (moments, step count)
        params: Named parameter set

    Raises:
        MissingGradientError: If any parameter has no gradient
    """
    for name, param in params.items():
        if param.grad is None:
            raise MissingGradientError(f"Parameter '{name}' has no gradient")

    state.step_count += 1
    lr, wd = state.learning_rate, state.weight_decay
    beta1, beta2 = state.betas

    for name, param in params.items():
        grad = param.grad
        if state.kind == "sgd":
            update = grad
        else:
            m = state.first_moments.get(name, np.zeros_like(grad))
            v = state.second_moments.get(name, np.zeros_like(grad))
            m = beta1 * m + (1.0 - beta1) * grad
            v = beta2 * v + (1.0 - beta2) * grad * grad
            state.first_moments[name] = m
            state.second_moments[name] = v
            m_hat = m / (1.0 - beta1 ** state.step_count)
            v_hat = v / (1.0 - beta2 ** state.step_count)
            if not (np.all(np.isfinite(m_hat)) and np.all(np.isfinite(v_hat))):
                raise NonFiniteError(f"Adam moments for '{name}' became non-finite")
            update = m_hat / (np.sqrt(v_hat) + state.eps)

        new_value = param.data - lr * update
        if wd > 0:
            new_value = new_value - lr * wd * param.data
        param.data = new_value


def zero_grad(params: Mapping[str, Tensor]) -> None:
    for param in params.values():
        param.zero_grad()


class Optimizer:
    """
    Binds a named parameter set to an `OptimizerState`.

    Example:
        >>> opt = Optimizer(model.parameters("trunk"), OptimizerState("adam", 1e-3))
        >>> loss.backward(); opt.step(); opt.zero_grad()
    """

    def __init__(self, params: Mapping[str, Tensor], state: OptimizerState):
        self.params = dict(params)
        self.state = state

    def step(self) -> None:
        optimizer_step(self.state, self.params)

    def zero_grad(self) -> None:
        zero_grad(self.params)
