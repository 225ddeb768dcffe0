"""Forward noising q(z_t | z_0) and the DiffusionSample record."""

from dataclasses import dataclass
from typing import Union

import numpy as np

from utils.autodiff.rng import RandomStream
from utils.autodiff.tensor import ShapeError, Tensor
from utils.diffusion.schedule import NoiseSchedule

ArrayLike = Union[Tensor, np.ndarray]


class ReconstructionError(AssertionError):
    """Raised when a drawn sample violates z_t = sqrt(ab) z_0 + sqrt(1 - ab) eps."""


def _values(x: ArrayLike) -> np.ndarray:
    return x.data if isinstance(x, Tensor) else np.asarray(x, dtype=np.float64)


def _coefficients(t, sched: NoiseSchedule, rows: int):
    alpha_bar = np.asarray(sched.alpha_bar_at(t), dtype=np.float64).reshape(-1)
    if alpha_bar.size == 1:
        alpha_bar = np.full(rows, alpha_bar[0])
    if alpha_bar.shape != (rows,):
        raise ShapeError(f"Got {alpha_bar.size} time steps for {rows} latents")
    return np.sqrt(alpha_bar)[:, None], np.sqrt(1.0 - alpha_bar)[:, None]


def q_sample(z0: ArrayLike, t, eps: ArrayLike, sched: NoiseSchedule) -> Tensor:
    """
    Noised latent z_t = sqrt(alpha_bar_t) z_0 + sqrt(1 - alpha_bar_t) eps.

    Args:
        z0: Clean latents [batch x dim]
        t: Step in [1, T], shared or one per row
        eps: Gaussian noise, same shape as z0
        sched: Noise schedule

    Returns:
        Constant tensor holding z_t

    Raises:
        ValueError: If t is outside [1, T]
        ShapeError: If eps and z0 differ in shape
    """
    sched.check_step(t)
    z0_values, eps_values = _values(z0), _values(eps)
    if z0_values.shape != eps_values.shape:
        raise ShapeError(f"q_sample: eps shape {eps_values.shape} does not match z0 shape {z0_values.shape}")
    if z0_values.ndim != 2:
        raise ShapeError(f"q_sample: expected [batch x dim] latents, got {z0_values.shape}")
    signal, noise = _coefficients(t, sched, z0_values.shape[0])
    return Tensor(signal * z0_values + noise * eps_values)


@dataclass
class DiffusionSample:
    """A clean latent, its step, the drawn noise and the resulting noised latent."""
    z0: Tensor
    t: np.ndarray
    eps: Tensor
    zt: Tensor

    def verify(self, sched: NoiseSchedule) -> None:
        """Check the reconstruction identity exactly."""
        expected = q_sample(self.z0, self.t, self.eps, sched)
        if not np.array_equal(expected.data, self.zt.data):
            raise ReconstructionError("z_t does not equal sqrt(ab) z0 + sqrt(1 - ab) eps for a drawn sample")


def draw_sample(z0: ArrayLike, sched: NoiseSchedule, stream: RandomStream) -> DiffusionSample:
    """Draw t ~ Uniform{1..T} per row and eps ~ N(0, I), then noise z0."""
    z0 = Tensor(_values(z0))
    rows = z0.shape[0]
    t = stream.integers(1, sched.T, size=rows)
    eps = Tensor(stream.normal(z0.shape))
    return DiffusionSample(z0=z0, t=t, eps=eps, zt=q_sample(z0, t, eps, sched))
