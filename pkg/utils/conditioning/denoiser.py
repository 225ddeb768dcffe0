"""Full evaluation of the conditional noise predictor epsilon_theta(z_t, T_text(y), t)."""

from typing import Optional, Tuple, Union

import numpy as np

from utils.autodiff import functional as F
from utils.autodiff.tensor import ShapeError, Tensor
from utils.conditioning.attention import ConditioningOutput, cross_attention
from utils.conditioning.encoder import encode_tokens
from utils.conditioning.model import DenoiserModel
from utils.conditioning.prompts import PromptSpec

Timesteps = Union[int, np.ndarray]


def timestep_embedding(t: Timesteps, batch: int, dim: int) -> Tensor:
    """Sinusoidal embedding [batch x dim] of integer steps (one per row or shared)."""
    steps = np.asarray(t, dtype=np.float64).reshape(-1)
    if steps.size == 1:
        steps = np.full(batch, steps[0])
    if steps.shape != (batch,):
        raise ShapeError(f"Got {steps.size} timesteps for a batch of {batch}")
    if np.any(steps < 1):
        raise ValueError(f"Timesteps must be >= 1, got min {steps.min():.0f}")
    half = dim // 2
    freqs = np.exp(-np.log(10000.0) * np.arange(half) / half)
    angles = steps[:, None] * freqs[None, :]
    return Tensor(np.concatenate([np.sin(angles), np.cos(angles)], axis=1))


def denoiser_forward(
    model: DenoiserModel,
    zt: Tensor,
    prompt: PromptSpec,
    t: Timesteps,
    context: Optional[Tensor] = None,
) -> Tuple[Tensor, Tensor]:
    """
    Predict the noise in z_t under a prompt.

    The trunk is silu(z W_in_z + tau(t) W_in_t + b_in) followed by one more
    silu layer, the cross-attention block and a linear head.

    Args:
        model: Denoiser parameters
        zt: Noised latents [batch x data_dim]
        prompt: Conditioning prompt
        t: Step index (shared) or one index per row
        context: Pre-encoded prompt, reused when the caller evaluates the same
            prompt repeatedly

    Returns:
        (eps_hat [batch x data_dim], attention map [batch x tokens])
    """
    config = model.config
    if zt.data.ndim != 2 or zt.shape[1] != config.data_dim:
        raise ShapeError(f"Expected latents of shape [batch x {config.data_dim}], got {zt.shape}")
    batch = zt.shape[0]
    if context is None:
        context = encode_tokens(model, prompt)
    temb = timestep_embedding(t, batch, config.time_dim)

    pre = F.add(F.matmul(zt, model["trunk.W_in_z"]), F.matmul(temb, model["trunk.W_in_t"]))
    hidden = F.silu(F.add(pre, F.repeat_rows(model["trunk.b_in"], batch)))
    hidden = F.silu(F.linear(hidden, model["trunk.W_hidden"], model["trunk.b_hidden"]))
    hidden, attention = cross_attention(hidden, context, model.parameters("attention"))
    eps_hat = F.linear(hidden, model["trunk.W_head"], model["trunk.b_head"])

    model.last_conditioning = ConditioningOutput(context=context, attention_map=attention)
    return eps_hat, attention
