"""Erasing by negatively guided self-distillation (ESD analogue)."""

import numpy as np

from utils.autodiff import functional as F
from utils.autodiff.rng import RandomStream, as_stream
from utils.autodiff.tensor import Tensor, no_grad
from utils.conditioning.denoiser import denoiser_forward
from utils.conditioning.model import DenoiserModel
from utils.conditioning.prompts import concept_prompt, neutral_prompt
from utils.conditioning.world import ConceptWorld
from utils.diffusion.forward import draw_sample
from utils.diffusion.schedule import NoiseSchedule
from erasure_implementations.finetune import ErasureFinetuner, gather_parameters
from erasure_implementations.types import ErasureSpec, UnlearnedModel


def negative_guidance_target(
    frozen: DenoiserModel,
    zt: Tensor,
    t: np.ndarray,
    target: int,
    negative_guidance: float,
) -> Tensor:
    """eps(y') - eta * (eps(c) - eps(y')) from the frozen model, as a constant."""
    with no_grad():
        eps_neutral, _ = denoiser_forward(frozen, zt, neutral_prompt(), t)
        eps_concept, _ = denoiser_forward(frozen, zt, concept_prompt(target), t)
    values = eps_neutral.data - negative_guidance * (eps_concept.data - eps_neutral.data)
    return Tensor(values)


def erase_esd(
    base: DenoiserModel,
    spec: ErasureSpec,
    seed: int,
    world: ConceptWorld,
    schedule: NoiseSchedule,
    verbose: bool = False,
) -> UnlearnedModel:
    """
    Fine-tune a copy of the base so that conditioning on the target predicts
    noise pushed away from the target direction.

    Only the attention block is tuned unless `spec.full_trunk` is set, in which
    case the trunk is tuned as well.

    Raises:
        ValueError: If the spec is not an ESD spec or the target is not in the world
    """
    if spec.method != "esd":
        raise ValueError(f"erase_esd called with method '{spec.method}'")
    world.check_concept(spec.target)
    base_checksum = base.checksum()
    frozen = base.copy()
    model = base.copy()
    groups = ("attention", "trunk") if spec.full_trunk else ("attention",)
    params = gather_parameters(model, groups=groups)
    prompt = concept_prompt(spec.target)

    def loss_fn(stream: RandomStream) -> Tensor:
        x0 = world.sample_training_points(spec.target, spec.batch_size, stream)
        sample = draw_sample(x0, schedule, stream)
        target = negative_guidance_target(frozen, sample.zt, sample.t, spec.target, spec.negative_guidance)
        eps_hat, _ = denoiser_forward(model, sample.zt, prompt, sample.t)
        return F.mse(eps_hat, target)

    finetuner = ErasureFinetuner("esd", params, spec.learning_rate, verbose=verbose)
    losses = finetuner.run(spec.steps, loss_fn, as_stream(seed).spawn("erase", spec.label))
    model.zero_grad()
    return UnlearnedModel(model=model, spec=spec, base_checksum=base_checksum, seed=seed, losses=losses)
