"""
Minimal dense-tensor arithmetic with reverse-mode automatic differentiation.
"""

from utils.autodiff.tensor import Tensor, ShapeError, NonFiniteError, backward, no_grad, is_grad_enabled
from utils.autodiff.functional import (
    add,
    sub,
    mul,
    elementwise,
    matmul,
    transpose,
    reshape,
    silu,
    softmax_rows,
    sum_all,
    mean_all,
    mse,
    stop_gradient,
    take_rows,
    concat_rows,
    repeat_rows,
    linear,
    cross_entropy,
)
from utils.autodiff.optim import OptimizerState, Optimizer, MissingGradientError, optimizer_step, zero_grad
from utils.autodiff.rng import RandomStream, as_stream
from utils.autodiff.gradcheck import numerical_gradient, relative_error

__all__ = [
    'Tensor',
    'ShapeError',
    'NonFiniteError',
    'backward',
    'no_grad',
    'is_grad_enabled',
    'add',
    'sub',
    'mul',
    'elementwise',
    'matmul',
    'transpose',
    'reshape',
    'silu',
    'softmax_rows',
    'sum_all',
    'mean_all',
    'mse',
    'stop_gradient',
    'take_rows',
    'concat_rows',
    'repeat_rows',
    'linear',
    'cross_entropy',
    'OptimizerState',
    'Optimizer',
    'MissingGradientError',
    'optimizer_step',
    'zero_grad',
    'RandomStream',
    'as_stream',
    'numerical_gradient',
    'relative_error',
]
