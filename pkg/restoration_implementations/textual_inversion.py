"""Textual inversion: optimize the placeholder embedding against a frozen model."""

import logging
from typing import Optional, Union

import numpy as np
from tqdm.auto import tqdm

from utils.autodiff.optim import Optimizer, OptimizerState
from utils.autodiff.rng import RandomStream, as_stream
from utils.autodiff.tensor import Tensor
from utils.conditioning.model import DenoiserModel
from utils.conditioning.prompts import placeholder_prompt
from utils.conditioning.world import PLACEHOLDER_TOKEN, ConceptWorld, concept_token
from utils.diffusion.forward import draw_sample
from utils.diffusion.schedule import NoiseSchedule, build_schedule
from utils.diffusion.training import denoise_loss
from erasure_implementations.types import UnlearnedModel

logger = logging.getLogger(__name__)


def initial_embedding(
    model: DenoiserModel,
    policy: str,
    target: int,
    stream: RandomStream,
    noise: float = 0.02,
) -> Tensor:
    """
    Starting point v0 for the placeholder embedding.

    "table_mean" is the mean of every real token row plus Gaussian noise;
    "target_token" is the target concept's own table row.
    """
    table = model["encoder.token_table"].data
    if policy == "table_mean":
        rows = [i for i, token in enumerate(model.vocab) if token != PLACEHOLDER_TOKEN]
        values = table[rows].mean(axis=0) + noise * stream.normal(table.shape[1])
    elif policy == "target_token":
        values = table[model.token_index(concept_token(target))].copy()
    else:
        raise ValueError(f"Unknown v0 policy '{policy}'")
    return Tensor(values, requires_grad=True, name="v")


def textual_inversion(
    target_model: Union[DenoiserModel, UnlearnedModel],
    world: ConceptWorld,
    target: int,
    iters: int,
    lr: float = 0.1,
    wd: float = 0.1,
    seed: Union[int, RandomStream] = 0,
    schedule: Optional[NoiseSchedule] = None,
    batch_size: int = 16,
    v0_policy: str = "table_mean",
    verbose: bool = False,
) -> Tensor:
    """
    Minimize ||eps - eps(z_t, T_text([NEUTRAL, S*], v), t)||^2 over v with
    the model's parameters frozen, drawing fresh (x0, t, eps) each iteration.

    Args:
        target_model: Base model (naive transfer) or an unlearned model (white box)
        world: Concept world supplying the target's training set
        target: Concept id to restore
        iters: Number of AdamW iterations; 0 returns v0
        lr: Embedding learning rate
        wd: Decoupled weight decay
        seed: Seed or stream

    Returns:
        The learned embedding v (detached copy)

    Raises:
        ValueError: If the target has no training data
    """
    model = target_model.model if isinstance(target_model, UnlearnedModel) else target_model
    world.check_concept(target)
    if len(world.train_sets[target]) == 0:
        raise ValueError(f"Concept {target} has no training points")
    schedule = schedule or build_schedule()
    stream = as_stream(seed)
    v = initial_embedding(model, v0_policy, target, stream.spawn("v0"))
    optimizer = Optimizer({"v": v}, OptimizerState(kind="adam", learning_rate=lr, weight_decay=wd))
    iteration_stream = stream.spawn("ti")

    losses = []
    for _ in tqdm(range(iters), desc=f"Textual inversion (c{target})", disable=not verbose):
        x0 = world.sample_training_points(target, batch_size, iteration_stream)
        sample = draw_sample(x0, schedule, iteration_stream)
        loss = denoise_loss(model, sample.z0, placeholder_prompt(v), sample.t, sample.eps, schedule)
        loss.backward()
        optimizer.step()
        optimizer.zero_grad()
        model.zero_grad()
        losses.append(loss.item())

    if verbose and losses:
        logger.info(f"Textual inversion for c{target}: loss {np.mean(losses[:10]):.4f} -> {np.mean(losses[-10:]):.4f}")
    return v.detach()
