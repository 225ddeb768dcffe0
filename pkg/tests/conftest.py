"""
Shared fixtures: the default concept world, a briefly trained base model and
a gated concept classifier. Session-scoped because each one costs a training run.
"""

import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent.parent))

import utils_setup  # noqa: E402,F401

from utils.autodiff.optim import OptimizerState  # noqa: E402
from utils.autodiff.rng import RandomStream  # noqa: E402
from utils.conditioning.model import DenoiserModel  # noqa: E402
from utils.conditioning.world import ConceptWorld, WorldConfig  # noqa: E402
from utils.diffusion.schedule import build_schedule  # noqa: E402
from utils.diffusion.training import train_denoiser  # noqa: E402
from utils.metrics.classifier import train_classifier  # noqa: E402
from erasure_implementations import ERASURE_METHODS, ErasureSpec, erase  # noqa: E402


@pytest.fixture(scope="session")
def world():
    """Default six-concept world."""
    return ConceptWorld.build(WorldConfig(), RandomStream(0))


@pytest.fixture(scope="session")
def schedule():
    return build_schedule()


@pytest.fixture(scope="session")
def short_schedule():
    """Twenty-step schedule for tests that only need the mechanics."""
    return build_schedule(T=20, beta_start=1e-3, beta_end=0.2)


@pytest.fixture(scope="session")
def fresh_model(world):
    """Untrained denoiser over the world's vocabulary."""
    return DenoiserModel.initialize(world.vocab, RandomStream(1))


@pytest.fixture(scope="session")
def base_model(world, schedule):
    """Denoiser trained for a short budget; callers must not mutate it."""
    model = DenoiserModel.initialize(world.vocab, RandomStream(2))
    train_denoiser(model, world, 300, OptimizerState(kind="adam", learning_rate=2e-3), seed=3,
                   schedule=schedule, batch_size=32)
    return model


@pytest.fixture(scope="session")
def classifier(world):
    return train_classifier(world, seed=4)


# Pilot-scale fixtures, requested only by tests marked slow

@pytest.fixture(scope="session")
def trained_base(world, schedule):
    """Base model at the default training budget."""
    model = DenoiserModel.initialize(world.vocab, RandomStream(30))
    train_denoiser(model, world, 4000, OptimizerState(kind="adam", learning_rate=2e-3), seed=31, schedule=schedule)
    return model


@pytest.fixture(scope="session")
def unlearned_set(world, schedule, trained_base):
    """Every erasure method applied to concept 0 at its default budget."""
    return {
        spec.label: erase(trained_base, spec, world, schedule, seed=32)
        for spec in (ErasureSpec(method, 0) for method in ERASURE_METHODS)
    }
