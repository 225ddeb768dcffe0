"""
Alternating search for a transferable placeholder embedding.

Each epoch draws one target image x0, descends the embedding loss on v with
the surrogate frozen, snapshots v into the candidate set and, when the epoch
is a multiple of f, descends the erase-step loss on the surrogate with v
frozen. The surrogate is always a private copy of the original model; no
unlearned model is ever read.
"""

import logging
from dataclasses import dataclass, field
from typing import Callable, List, Optional, Tuple, Union

import numpy as np
from tqdm.auto import tqdm

from utils.autodiff import functional as F
from utils.autodiff.optim import Optimizer, OptimizerState
from utils.autodiff.rng import RandomStream, as_stream
from utils.autodiff.tensor import Tensor, no_grad
from utils.conditioning.denoiser import denoiser_forward
from utils.conditioning.model import DenoiserModel
from utils.conditioning.prompts import neutral_prompt, placeholder_prompt
from utils.conditioning.world import ConceptWorld
from utils.diffusion.forward import DiffusionSample, draw_sample, q_sample
from utils.diffusion.schedule import NoiseSchedule, build_schedule
from utils.diffusion.training import denoise_loss
from erasure_implementations.types import UnlearnedModel
from restoration_implementations.candidates import CandidateEntry, CandidateSet
from restoration_implementations.config import ASConfig
from restoration_implementations.textual_inversion import initial_embedding

logger = logging.getLogger(__name__)

SURROGATE_GROUPS = ("trunk", "attention")
WITNESS_TOLERANCE = 1e-9


@dataclass
class RelaxationWitness:
    """One row of a parameter-phase batch: eps, the neutral target eps~, and the v-conditioned prediction."""
    eps: np.ndarray
    eps_tilde: np.ndarray
    pred: np.ndarray

    @property
    def d(self) -> float:
        return float(np.linalg.norm(self.eps - self.eps_tilde))

    def slack(self) -> float:
        """||eps - pred|| - (d - ||pred - eps~||); non-negative by the triangle inequality."""
        return float(np.linalg.norm(self.eps - self.pred) - (self.d - np.linalg.norm(self.pred - self.eps_tilde)))

    def holds(self, tolerance: float = WITNESS_TOLERANCE) -> bool:
        return self.slack() >= -tolerance


@dataclass
class PhaseRecord:
    """Checksums of theta and v around one phase of the alternation."""
    epoch: int
    phase: str
    theta_before: str
    theta_after: str
    v_before: str
    v_after: str

    def separated(self) -> bool:
        """Embedding phases leave theta unchanged; parameter phases leave v unchanged."""
        if self.phase == "embedding":
            return self.theta_before == self.theta_after
        return self.v_before == self.v_after


@dataclass
class ReferenceDivergence:
    """Inner-loss values under the stop-gradient and frozen-reference targets."""
    epoch: int
    iteration: int
    stop_gradient_loss: float
    reference_loss: float


def _inner_terms(
    surrogate: DenoiserModel,
    v: Tensor,
    zt: Tensor,
    t,
    reference: Optional[DenoiserModel] = None,
) -> Tuple[Tensor, Tensor]:
    """Prediction under [NEUTRAL, S*=v] (v held constant) and the constant neutral target."""
    v_fixed = Tensor(v.data)
    pred, _ = denoiser_forward(surrogate, zt, placeholder_prompt(v_fixed), t)
    if reference is None:
        neutral, _ = denoiser_forward(surrogate, zt, neutral_prompt(), t)
        return pred, F.stop_gradient(neutral)
    with no_grad():
        neutral, _ = denoiser_forward(reference, zt, neutral_prompt(), t)
    return pred, neutral


def erase_step_loss(
    surrogate: DenoiserModel,
    v: Tensor,
    z0,
    t,
    eps,
    sched: NoiseSchedule,
    reference: Optional[DenoiserModel] = None,
) -> Tensor:
    """
    ||eps(z_t, T_text([NEUTRAL, S*], v), t) - sg(eps(z_t, T_text([NEUTRAL]), t))||^2.

    Differentiable with respect to the surrogate's parameters only; v is
    treated as a constant. With `reference`, the neutral target comes from
    that frozen model instead of the surrogate itself.
    """
    zt = q_sample(z0, t, eps, sched)
    pred, target = _inner_terms(surrogate, v, zt, t, reference)
    return F.mse(pred, target)


class AdversarialSearch:
    """
    Runs the alternating embedding / surrogate search on a private copy of
    the original model.

    Args:
        surrogate_base: The original (pre-erasure) model; never mutated
        world: Concept world supplying the target's images
        target: Concept id to restore
        config: Search budgets and rates
        schedule: Noise schedule
        verbose: Whether to log progress

    Raises:
        TypeError: If handed an unlearned model instead of the original
    """

    def __init__(
        self,
        surrogate_base: DenoiserModel,
        world: ConceptWorld,
        target: int,
        config: Optional[ASConfig] = None,
        schedule: Optional[NoiseSchedule] = None,
        verbose: bool = False,
    ):
        if isinstance(surrogate_base, UnlearnedModel) or not isinstance(surrogate_base, DenoiserModel):
            raise TypeError("Adversarial search only accepts the original DenoiserModel as surrogate")
        world.check_concept(target)
        self.world = world
        self.target = target
        self.config = config or ASConfig()
        self.base_checksum = surrogate_base.checksum()
        self.surrogate = surrogate_base.copy()
        self.reference = surrogate_base.copy() if self._needs_reference(self.config) else None
        self.schedule = schedule or build_schedule()
        self.verbose = verbose
        self.witnesses: List[RelaxationWitness] = []
        self.phase_records: List[PhaseRecord] = []
        self.reference_divergence: List[ReferenceDivergence] = []
        self.update_epochs: List[int] = []

    @staticmethod
    def _needs_reference(config: ASConfig) -> bool:
        return config.inner_loss == "frozen_reference" or config.track_reference_divergence

    def _log(self, message: str) -> None:
        """Log message if verbose mode is enabled."""
        if self.verbose:
            logger.info(message)

    def _theta_checksum(self) -> str:
        return self.surrogate.checksum()

    def _epoch_batch(self, stream: RandomStream) -> np.ndarray:
        x0 = self.world.sample_training_points(self.target, 1, stream)
        return np.repeat(x0, self.config.batch_size, axis=0)

    def _embedding_phase(self, v: Tensor, optimizer: Optimizer, z0: np.ndarray, stream: RandomStream) -> float:
        loss_value = float("nan")
        for _ in range(self.config.I_v):
            sample = draw_sample(z0, self.schedule, stream)
            loss = denoise_loss(self.surrogate, sample.z0, placeholder_prompt(v), sample.t, sample.eps, self.schedule)
            loss.backward()
            optimizer.step()
            optimizer.zero_grad()
            self.surrogate.zero_grad()
            loss_value = loss.item()
        return loss_value

    def _record_witnesses(self, sample: DiffusionSample, pred: Tensor, target: Tensor) -> None:
        for row in range(sample.eps.shape[0]):
            self.witnesses.append(
                RelaxationWitness(
                    eps=sample.eps.data[row].copy(),
                    eps_tilde=target.data[row].copy(),
                    pred=pred.data[row].copy(),
                )
            )

    def _parameter_phase(self, epoch: int, v: Tensor, optimizer: Optimizer, z0: np.ndarray, stream: RandomStream) -> None:
        use_reference = self.config.inner_loss == "frozen_reference"
        for iteration in range(self.config.I_theta):
            sample = draw_sample(z0, self.schedule, stream)
            pred, target = _inner_terms(
                self.surrogate, v, sample.zt, sample.t, self.reference if use_reference else None
            )
            loss = F.mse(pred, target)
            if self.config.record_witnesses:
                self._record_witnesses(sample, pred, target)
            if self.config.track_reference_divergence:
                self._track_divergence(epoch, iteration, v, sample, loss.item(), use_reference)
            loss.backward()
            optimizer.step()
            optimizer.zero_grad()
            self.surrogate.zero_grad()

    def _track_divergence(
        self,
        epoch: int,
        iteration: int,
        v: Tensor,
        sample: DiffusionSample,
        current_loss: float,
        use_reference: bool,
    ) -> None:
        with no_grad():
            other = erase_step_loss(
                self.surrogate,
                v,
                sample.z0,
                sample.t,
                sample.eps,
                self.schedule,
                reference=None if use_reference else self.reference,
            ).item()
        sg_loss, ref_loss = (other, current_loss) if use_reference else (current_loss, other)
        self.reference_divergence.append(ReferenceDivergence(epoch, iteration, sg_loss, ref_loss))

    def run(
        self,
        seed: Union[int, RandomStream],
        on_epoch_end: Optional[Callable[[int, np.ndarray], None]] = None,
    ) -> CandidateSet:
        """
        Execute E epochs and return the candidate set V (one entry per epoch).

        Args:
            seed: Seed or stream; the whole run consumes one ordered stream
            on_epoch_end: Optional callback receiving (epoch, copy of v)
        """
        cfg = self.config
        stream = as_stream(seed)
        v = initial_embedding(self.surrogate, cfg.v0_policy, self.target, stream.spawn("v0"), cfg.v0_noise)
        v_optimizer = Optimizer({"v": v}, OptimizerState(kind="adam", learning_rate=cfg.lr_v, weight_decay=cfg.wd_v))
        theta_optimizer = Optimizer(
            self.surrogate.parameters(*SURROGATE_GROUPS),
            OptimizerState(kind="adam", learning_rate=cfg.lr_theta),
        )
        run_stream = stream.spawn("search")
        entries: List[CandidateEntry] = []
        self._log(
            f"Adversarial search for c{self.target}: E={cfg.E}, I_v={cfg.I_v}, f={cfg.f}, I_theta={cfg.I_theta}"
        )

        with tqdm(total=cfg.E, desc=f"Adversarial search (c{self.target})", disable=not self.verbose) as pbar:
            for epoch in range(cfg.E):
                z0 = self._epoch_batch(run_stream)

                theta_before, v_before = self._theta_checksum(), v.checksum()
                loss_v = self._embedding_phase(v, v_optimizer, z0, run_stream)
                self.phase_records.append(
                    PhaseRecord(epoch, "embedding", theta_before, self._theta_checksum(), v_before, v.checksum())
                )
                entries.append(CandidateEntry(epoch=epoch, embedding=v.numpy(), loss=loss_v))
                if on_epoch_end is not None:
                    on_epoch_end(epoch, v.numpy())

                if cfg.update_surrogate and epoch % cfg.f == 0:
                    theta_before, v_before = self._theta_checksum(), v.checksum()
                    self._parameter_phase(epoch, v, theta_optimizer, z0, run_stream)
                    self.phase_records.append(
                        PhaseRecord(epoch, "parameter", theta_before, self._theta_checksum(), v_before, v.checksum())
                    )
                    self.update_epochs.append(epoch)

                pbar.update(1)
                pbar.set_postfix({"L_v": f"{loss_v:.4f}"})

        violations = sum(not w.holds() for w in self.witnesses)
        if violations:
            logger.warning(f"{violations} relaxation witnesses violated the triangle bound")
        self._log(f"Search finished: {len(entries)} candidates, {len(self.update_epochs)} parameter phases")
        return CandidateSet(
            entries=entries,
            config=cfg,
            provenance={
                "surrogate_checksum": self.base_checksum,
                "target": self.target,
                "seed": stream.seed,
                "update_epochs": list(self.update_epochs),
            },
        )


def adversarial_search(
    surrogate_base: DenoiserModel,
    world: ConceptWorld,
    target: int,
    cfg: Optional[ASConfig] = None,
    seed: Union[int, RandomStream] = 0,
    schedule: Optional[NoiseSchedule] = None,
    verbose: bool = False,
) -> CandidateSet:
    """
    Search for transferable embeddings of `target` on the original model.

    Example usage:
        >>> V = adversarial_search(base, world, target=2, cfg=ASConfig(E=50), seed=0)
        >>> len(V) == 50
    """
    return AdversarialSearch(surrogate_base, world, target, cfg, schedule, verbose=verbose).run(seed)
