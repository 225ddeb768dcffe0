"""Concept ablation: remap the target token onto an anchor concept (CA analogue)."""

from utils.autodiff import functional as F
from utils.autodiff.rng import RandomStream, as_stream
from utils.autodiff.tensor import Tensor
from utils.conditioning.denoiser import denoiser_forward
from utils.conditioning.model import DenoiserModel
from utils.conditioning.prompts import concept_prompt
from utils.conditioning.world import ConceptWorld
from utils.diffusion.forward import draw_sample
from utils.diffusion.schedule import NoiseSchedule
from erasure_implementations.finetune import ErasureFinetuner, gather_parameters
from erasure_implementations.types import ErasureSpec, UnlearnedModel

CA_PARAMETERS = ("attention.W_key", "attention.W_value")


def resolve_anchor(spec: ErasureSpec, world: ConceptWorld) -> int:
    anchor = spec.anchor if spec.anchor is not None else world.anchor_map[spec.target]
    world.check_concept(anchor)
    if anchor == spec.target:
        raise ValueError(f"CA anchor must differ from the target, both are {anchor}")
    return anchor


def erase_ca(
    base: DenoiserModel,
    spec: ErasureSpec,
    seed: int,
    world: ConceptWorld,
    schedule: NoiseSchedule,
    verbose: bool = False,
) -> UnlearnedModel:
    """
    Minimize ||eps(z_t, c_target, t) - sg(eps(z_t, anchor, t))||^2 on anchor
    data, tuning the key and value projections of the copy.

    Raises:
        ValueError: If the anchor equals the target or the spec is not CA
    """
    if spec.method != "ca":
        raise ValueError(f"erase_ca called with method '{spec.method}'")
    world.check_concept(spec.target)
    anchor = resolve_anchor(spec, world)
    base_checksum = base.checksum()
    model = base.copy()
    params = gather_parameters(model, names=CA_PARAMETERS)
    target_prompt, anchor_prompt = concept_prompt(spec.target), concept_prompt(anchor)

    def loss_fn(stream: RandomStream) -> Tensor:
        x0 = world.sample_training_points(anchor, spec.batch_size, stream)
        sample = draw_sample(x0, schedule, stream)
        eps_target, _ = denoiser_forward(model, sample.zt, target_prompt, sample.t)
        eps_anchor, _ = denoiser_forward(model, sample.zt, anchor_prompt, sample.t)
        return F.mse(eps_target, F.stop_gradient(eps_anchor))

    finetuner = ErasureFinetuner("ca", params, spec.learning_rate, verbose=verbose)
    losses = finetuner.run(spec.steps, loss_fn, as_stream(seed).spawn("erase", spec.label))
    model.zero_grad()
    return UnlearnedModel(model=model, spec=spec, base_checksum=base_checksum, seed=seed, losses=losses)
