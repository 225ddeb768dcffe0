"""Noise-prediction objective and conditional denoiser training."""

import logging
from dataclasses import dataclass, field
from typing import List, Optional, Union

import numpy as np
from tqdm.auto import tqdm

from utils.autodiff import functional as F
from utils.autodiff.optim import Optimizer, OptimizerState
from utils.autodiff.rng import RandomStream, as_stream
from utils.autodiff.tensor import Tensor
from utils.conditioning.denoiser import denoiser_forward
from utils.conditioning.model import DenoiserModel
from utils.conditioning.prompts import PromptSpec, concept_prompt, neutral_prompt
from utils.conditioning.world import ConceptWorld
from utils.diffusion.forward import draw_sample, q_sample
from utils.diffusion.schedule import NoiseSchedule, build_schedule

logger = logging.getLogger(__name__)


def denoise_loss(
    model: DenoiserModel,
    z0: Union[Tensor, np.ndarray],
    cond: PromptSpec,
    t,
    eps: Union[Tensor, np.ndarray],
    sched: NoiseSchedule,
) -> Tensor:
    """
    Mean squared error between eps and epsilon_theta(z_t, cond, t).

    Differentiable with respect to the model parameters and to any embedding
    bound inside `cond`.
    """
    zt = q_sample(z0, t, eps, sched)
    eps = eps if isinstance(eps, Tensor) else Tensor(eps)
    eps_hat, _ = denoiser_forward(model, zt, cond, t)
    return F.mse(eps_hat, eps)


@dataclass
class TrainingConfig:
    """Budget of base-model training."""
    steps: int = 4000
    learning_rate: float = 2e-3
    batch_size: int = 64
    neutral_prob: float = 0.2

    def __post_init__(self):
        """Validate configuration after initialization."""
        if self.steps < 0:
            raise ValueError(f"steps must be non-negative, got {self.steps}")
        if self.learning_rate <= 0:
            raise ValueError(f"learning_rate must be positive, got {self.learning_rate}")
        if self.batch_size < 1:
            raise ValueError(f"batch_size must be at least 1, got {self.batch_size}")
        if not 0.0 <= self.neutral_prob < 1.0:
            raise ValueError(f"neutral_prob must be in [0, 1), got {self.neutral_prob}")


@dataclass
class TrainingReport:
    """Loss trace and final parameter checksum of one training run."""
    losses: List[float] = field(default_factory=list)
    checksum: str = ""
    neutral_steps: int = 0
    verified_samples: int = 0

    def leading_mean(self, window: int = 100) -> float:
        return float(np.mean(self.losses[:window]))

    def trailing_mean(self, window: int = 100) -> float:
        return float(np.mean(self.losses[-window:]))


class DenoiserTrainer:
    """
    Trains epsilon_theta on the concept world: each step picks a concept (or,
    with probability neutral_prob, the neutral prompt over the whole mixture),
    draws a batch of its training points, t ~ Uniform{1..T} and eps, and takes
    one optimizer step on the noise-prediction loss.

    Args:
        world: Concept universe supplying training sets
        schedule: Noise schedule
        batch_size: (t, eps) pairs per step
        neutral_prob: Probability of a neutral-prompt step
        verbose: Whether to log progress
    """

    def __init__(
        self,
        world: ConceptWorld,
        schedule: NoiseSchedule,
        batch_size: int = 64,
        neutral_prob: float = 0.2,
        verbose: bool = False,
    ):
        if world.n_concepts < 1 or any(len(x) == 0 for x in world.train_sets):
            raise ValueError("Cannot train on an empty world")
        self.world = world
        self.schedule = schedule
        self.batch_size = batch_size
        self.neutral_prob = neutral_prob
        self.verbose = verbose

    def _log(self, message: str) -> None:
        """Log message if verbose mode is enabled."""
        if self.verbose:
            logger.info(message)

    def _draw_batch(self, stream: RandomStream):
        if stream.uniform(None) < self.neutral_prob:
            return neutral_prompt(), self.world.sample_training_mixture(self.batch_size, stream), True
        k = int(stream.choice(self.world.n_concepts))
        return concept_prompt(k), self.world.sample_training_points(k, self.batch_size, stream), False

    def train(
        self,
        model: DenoiserModel,
        steps: int,
        opt: OptimizerState,
        seed: Union[int, RandomStream],
    ) -> TrainingReport:
        """Run `steps` optimizer steps in place on every parameter of `model`."""
        stream = as_stream(seed)
        optimizer = Optimizer(model.parameters(), opt)
        report = TrainingReport()
        self._log(f"Training denoiser for {steps} steps (batch {self.batch_size})")

        with tqdm(total=steps, desc="Training denoiser", disable=not self.verbose) as pbar:
            for step in range(steps):
                prompt, x0, is_neutral = self._draw_batch(stream)
                sample = draw_sample(x0, self.schedule, stream)
                sample.verify(self.schedule)
                report.verified_samples += x0.shape[0]
                report.neutral_steps += int(is_neutral)

                loss = denoise_loss(model, sample.z0, prompt, sample.t, sample.eps, self.schedule)
                loss.backward()
                optimizer.step()
                optimizer.zero_grad()

                report.losses.append(loss.item())
                pbar.update(1)
                if step % 100 == 0:
                    pbar.set_postfix({"loss": f"{loss.item():.4f}"})

        report.checksum = model.checksum()
        if steps:
            self._log(
                f"Finished training: leading loss {report.leading_mean():.4f}, "
                f"trailing loss {report.trailing_mean():.4f}"
            )
        return report


def train_denoiser(
    model: DenoiserModel,
    world: ConceptWorld,
    steps: int,
    opt: OptimizerState,
    seed: Union[int, RandomStream],
    schedule: Optional[NoiseSchedule] = None,
    batch_size: int = 64,
    neutral_prob: float = 0.2,
    verbose: bool = False,
) -> TrainingReport:
    """
    Train the denoiser in place on the world's training sets.

    Example usage:
        >>> report = train_denoiser(model, world, 4000, OptimizerState("adam", 2e-3), seed=0)
        >>> report.trailing_mean() < report.leading_mean()
    """
    trainer = DenoiserTrainer(
        world,
        schedule or build_schedule(),
        batch_size=batch_size,
        neutral_prob=neutral_prob,
        verbose=verbose,
    )
    return trainer.train(model, steps, opt, seed)
