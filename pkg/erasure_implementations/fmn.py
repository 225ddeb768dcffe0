"""Forget-me-not: suppress attention on the target token (FMN analogue)."""

import numpy as np

from utils.autodiff import functional as F
from utils.autodiff.rng import RandomStream, as_stream
from utils.autodiff.tensor import Tensor, no_grad
from utils.conditioning.denoiser import denoiser_forward
from utils.conditioning.model import DenoiserModel
from utils.conditioning.prompts import PromptSpec, concept_prompt
from utils.conditioning.world import ConceptWorld
from utils.diffusion.forward import draw_sample
from utils.diffusion.schedule import NoiseSchedule
from erasure_implementations.finetune import ErasureFinetuner, gather_parameters
from erasure_implementations.types import ErasureSpec, UnlearnedModel

FMN_PARAMETERS = ("attention.W_query", "attention.W_key")
TARGET_SLOT = 1


def attention_suppression_loss(attention: Tensor, slot: int = TARGET_SLOT) -> Tensor:
    """Sum over queries of the squared attention mass on one token position."""
    selector = np.zeros((attention.shape[1], 1))
    selector[slot, 0] = 1.0
    column = F.matmul(attention, Tensor(selector))
    return F.sum_all(F.mul(column, column))


def mean_slot_attention(
    model: DenoiserModel,
    prompt: PromptSpec,
    world: ConceptWorld,
    target: int,
    schedule: NoiseSchedule,
    stream: RandomStream,
    n: int = 256,
    slot: int = TARGET_SLOT,
) -> float:
    """Mean attention on `slot` over noised target-concept data."""
    x0 = world.sample_training_points(target, n, stream)
    sample = draw_sample(x0, schedule, stream)
    with no_grad():
        _, attention = denoiser_forward(model, sample.zt, prompt, sample.t)
    return float(attention.data[:, slot].mean())


def erase_fmn(
    base: DenoiserModel,
    spec: ErasureSpec,
    seed: int,
    world: ConceptWorld,
    schedule: NoiseSchedule,
    verbose: bool = False,
) -> UnlearnedModel:
    """
    Tune the query and key projections of a copy to drive the attention on
    the target token's position towards zero over sampled (z_t, t).

    Raises:
        ValueError: If the spec is not an FMN spec
    """
    if spec.method != "fmn":
        raise ValueError(f"erase_fmn called with method '{spec.method}'")
    world.check_concept(spec.target)
    base_checksum = base.checksum()
    model = base.copy()
    params = gather_parameters(model, names=FMN_PARAMETERS)
    prompt = concept_prompt(spec.target)

    def loss_fn(stream: RandomStream) -> Tensor:
        x0 = world.sample_training_points(spec.target, spec.batch_size, stream)
        sample = draw_sample(x0, schedule, stream)
        _, attention = denoiser_forward(model, sample.zt, prompt, sample.t)
        return attention_suppression_loss(attention)

    finetuner = ErasureFinetuner("fmn", params, spec.learning_rate, verbose=verbose)
    losses = finetuner.run(spec.steps, loss_fn, as_stream(seed).spawn("erase", spec.label))
    model.zero_grad()
    return UnlearnedModel(model=model, spec=spec, base_checksum=base_checksum, seed=seed, losses=losses)
