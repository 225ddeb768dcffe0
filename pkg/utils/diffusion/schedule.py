"""Linear noise schedule with cumulative products alpha_bar_t, indexed t = 1..T."""

from dataclasses import dataclass
from typing import Union

import numpy as np

Steps = Union[int, np.ndarray]


@dataclass
class ScheduleConfig:
    """Configuration of the linear beta schedule."""
    T: int = 100
    beta_start: float = 1e-4
    beta_end: float = 0.05

    def __post_init__(self):
        """Validate configuration after initialization."""
        if self.T < 2:
            raise ValueError(f"T must be at least 2, got {self.T}")
        if not 0.0 < self.beta_start <= self.beta_end < 1.0:
            raise ValueError(
                f"Need 0 < beta_start <= beta_end < 1, got beta_start={self.beta_start}, beta_end={self.beta_end}"
            )


@dataclass(frozen=True, eq=False)
class NoiseSchedule:
    """Per-step variances beta_t and alpha_bar_t = prod_{s<=t} (1 - beta_s)."""
    T: int
    betas: np.ndarray
    alpha_bar: np.ndarray

    def __post_init__(self):
        """Validate the schedule invariants."""
        if self.betas.shape != (self.T,) or self.alpha_bar.shape != (self.T,):
            raise ValueError(f"betas and alpha_bar must both have length T={self.T}")
        if np.any(self.alpha_bar <= 0) or np.any(self.alpha_bar >= 1):
            raise ValueError("Every alpha_bar_t must lie in (0, 1)")
        if np.any(np.diff(self.alpha_bar) >= 0):
            raise ValueError("alpha_bar must be strictly decreasing in t")

    def check_step(self, t: Steps) -> np.ndarray:
        """Return t as an int array, raising if any step is outside [1, T]."""
        steps = np.asarray(t)
        if not np.issubdtype(steps.dtype, np.integer):
            raise ValueError(f"Time steps must be integers, got dtype {steps.dtype}")
        if np.any(steps < 1) or np.any(steps > self.T):
            raise ValueError(f"Time step out of range [1, {self.T}]: {steps.min()}..{steps.max()}")
        return steps

    def beta_at(self, t: Steps) -> np.ndarray:
        return self.betas[self.check_step(t) - 1]

    def alpha_bar_at(self, t: Steps) -> np.ndarray:
        """alpha_bar_t, with alpha_bar_0 = 1 accepted for the final DDIM jump."""
        steps = np.asarray(t)
        if np.all(steps == 0):
            return np.ones(steps.shape)
        return self.alpha_bar[self.check_step(t) - 1]

    def to_dict(self) -> dict:
        return {"T": self.T, "betas": self.betas.tolist()}


def build_schedule(T: int = 100, beta_start: float = 1e-4, beta_end: float = 0.05) -> NoiseSchedule:
    """
    Linearly interpolate beta from beta_start to beta_end over T steps.

    Raises:
        ValueError: If T < 2 or the betas are outside 0 < start <= end < 1
    """
    ScheduleConfig(T=T, beta_start=beta_start, beta_end=beta_end)
    betas = np.linspace(beta_start, beta_end, T, dtype=np.float64)
    alpha_bar = np.cumprod(1.0 - betas)
    return NoiseSchedule(T=T, betas=betas, alpha_bar=alpha_bar)


def schedule_from_config(config: ScheduleConfig) -> NoiseSchedule:
    return build_schedule(config.T, config.beta_start, config.beta_end)
