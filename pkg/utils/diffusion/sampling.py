"""Ancestral (DDPM) and deterministic (DDIM, eta = 0) samplers."""

from typing import Union

import numpy as np

from utils.autodiff.rng import RandomStream, as_stream
from utils.autodiff.tensor import Tensor, no_grad
from utils.conditioning.denoiser import denoiser_forward
from utils.conditioning.encoder import encode_tokens
from utils.conditioning.model import DenoiserModel
from utils.conditioning.prompts import PromptSpec
from utils.diffusion.schedule import NoiseSchedule

Seed = Union[int, RandomStream]


def _sample_streams(seed: Seed, n: int):
    root = as_stream(seed).spawn("sampler")
    return [root.spawn(i) for i in range(n)]


def _check_count(n: int) -> None:
    if n <= 0:
        raise ValueError(f"Number of samples must be positive, got {n}")


def ddpm_sample(
    model: DenoiserModel,
    cond: PromptSpec,
    n: int,
    sched: NoiseSchedule,
    seed: Seed,
) -> np.ndarray:
    """
    Ancestral sampling from z_T ~ N(0, I) with per-step variance beta_t.

    Each sample i owns a stream derived from (seed, i) that supplies z_T and
    the T - 1 step noises, so a sample does not depend on n.

    Returns:
        Array [n x data_dim] of generated points
    """
    _check_count(n)
    dim = model.config.data_dim
    streams = _sample_streams(seed, n)
    draws = [s.normal((sched.T, dim)) for s in streams]
    z = np.stack([d[0] for d in draws])
    step_noise = np.stack([d[1:] for d in draws], axis=1)  # [T-1 x n x dim]

    with no_grad():
        context = encode_tokens(model, cond)
        for t in range(sched.T, 0, -1):
            eps_hat, _ = denoiser_forward(model, Tensor(z), cond, t, context=context)
            beta = sched.betas[t - 1]
            alpha_bar = sched.alpha_bar[t - 1]
            mean = (z - beta / np.sqrt(1.0 - alpha_bar) * eps_hat.data) / np.sqrt(1.0 - beta)
            z = mean + np.sqrt(beta) * step_noise[sched.T - t] if t > 1 else mean
    return z


def ddim_sample(
    model: DenoiserModel,
    cond: PromptSpec,
    n: int,
    sched: NoiseSchedule,
    stride: int,
    seed: Seed,
) -> np.ndarray:
    """
    Deterministic DDIM over the steps T, T - stride, ..., stride; only z_T is drawn.

    Raises:
        ValueError: If stride does not divide T or n <= 0
    """
    _check_count(n)
    if stride < 1 or sched.T % stride:
        raise ValueError(f"DDIM stride must divide T={sched.T}, got {stride}")
    dim = model.config.data_dim
    z = np.stack([s.normal((dim,)) for s in _sample_streams(seed, n)])

    with no_grad():
        context = encode_tokens(model, cond)
        for t in range(sched.T, 0, -stride):
            eps_hat, _ = denoiser_forward(model, Tensor(z), cond, t, context=context)
            alpha_bar = sched.alpha_bar[t - 1]
            alpha_bar_prev = sched.alpha_bar_at(t - stride)
            x0_pred = (z - np.sqrt(1.0 - alpha_bar) * eps_hat.data) / np.sqrt(alpha_bar)
            z = np.sqrt(alpha_bar_prev) * x0_pred + np.sqrt(1.0 - alpha_bar_prev) * eps_hat.data
    return z
