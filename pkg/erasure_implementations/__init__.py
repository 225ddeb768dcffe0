"""
Toy-scale concept erasure methods (ESD, CA, FMN, UCE analogues) producing
unlearned copies of a trained base model.
"""

from typing import Callable, Dict

from utils.conditioning.model import DenoiserModel
from utils.conditioning.world import ConceptWorld
from utils.diffusion.schedule import NoiseSchedule
from erasure_implementations.types import DEFAULT_BUDGETS, ERASURE_METHODS, ErasureSpec, UnlearnedModel
from erasure_implementations.esd import erase_esd, negative_guidance_target
from erasure_implementations.ca import erase_ca, resolve_anchor
from erasure_implementations.fmn import attention_suppression_loss, erase_fmn, mean_slot_attention
from erasure_implementations.uce import (
    SingularSystemError,
    edit_uce,
    minimum_change_edit,
    normal_equations,
    solve_projection,
    token_encoding,
)

_FINETUNE_METHODS: Dict[str, Callable[..., UnlearnedModel]] = {
    "esd": erase_esd,
    "ca": erase_ca,
    "fmn": erase_fmn,
}


def erase(
    base: DenoiserModel,
    spec: ErasureSpec,
    world: ConceptWorld,
    schedule: NoiseSchedule,
    seed: int,
    verbose: bool = False,
) -> UnlearnedModel:
    """Dispatch an erasure spec to its method."""
    if spec.method == "uce":
        return edit_uce(base, spec, world, verbose=verbose)
    return _FINETUNE_METHODS[spec.method](base, spec, seed, world, schedule, verbose=verbose)


__all__ = [
    'DEFAULT_BUDGETS',
    'ERASURE_METHODS',
    'ErasureSpec',
    'UnlearnedModel',
    'SingularSystemError',
    'erase',
    'erase_esd',
    'erase_ca',
    'erase_fmn',
    'edit_uce',
    'minimum_change_edit',
    'negative_guidance_target',
    'resolve_anchor',
    'attention_suppression_loss',
    'mean_slot_attention',
    'normal_equations',
    'solve_projection',
    'token_encoding',
]
