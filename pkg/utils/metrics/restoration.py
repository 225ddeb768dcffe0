"""Restoration accuracy: how often generations under an attack input show the target."""

from dataclasses import dataclass, asdict
from typing import Union

import numpy as np

from utils.autodiff.rng import RandomStream, as_stream
from utils.autodiff.tensor import Tensor
from utils.conditioning.model import DenoiserModel
from utils.conditioning.prompts import PromptSpec, literal_prompt, neutral_prompt, placeholder_prompt
from utils.diffusion.sampling import ddim_sample, ddpm_sample
from utils.diffusion.schedule import NoiseSchedule
from utils.metrics.classifier import ConceptClassifier

AttackValue = Union[str, np.ndarray, Tensor, PromptSpec]
SAMPLERS = ("ddim", "ddpm")


@dataclass
class RestorationScore:
    """Argmax accuracy and mean target-class probability over n generations."""
    accuracy: float
    mean_probability: float
    n: int

    def to_dict(self):
        return asdict(self)


def attack_prompt(attack: AttackValue) -> PromptSpec:
    """A literal token becomes [NEUTRAL, token]; an embedding is bound at S*."""
    if isinstance(attack, PromptSpec):
        return attack
    if isinstance(attack, str):
        return literal_prompt(attack)
    values = attack.data if isinstance(attack, Tensor) else np.asarray(attack, dtype=np.float64)
    return placeholder_prompt(Tensor(values.reshape(-1)))


def generate(
    model: DenoiserModel,
    prompt: PromptSpec,
    n: int,
    schedule: NoiseSchedule,
    seed: Union[int, RandomStream],
    sampler: str = "ddim",
    stride: int = 5,
) -> np.ndarray:
    if sampler == "ddim":
        return ddim_sample(model, prompt, n, schedule, stride, seed)
    if sampler == "ddpm":
        return ddpm_sample(model, prompt, n, schedule, seed)
    raise ValueError(f"Unknown sampler '{sampler}', expected one of {SAMPLERS}")


def restoration_scores(
    model: DenoiserModel,
    attack: AttackValue,
    classifier: ConceptClassifier,
    target: int,
    n: int,
    seed: Union[int, RandomStream],
    schedule: NoiseSchedule,
    stride: int = 5,
    sampler: str = "ddim",
) -> RestorationScore:
    """
    Generate n samples under the attack input, classify each, and score.

    "Classified as target" means the argmax class equals the target.

    Raises:
        ValueError: If n < 1
    """
    if n < 1:
        raise ValueError(f"n must be at least 1, got {n}")
    samples = generate(model, attack_prompt(attack), n, schedule, seed, sampler, stride)
    probabilities = classifier.predict_proba(samples)
    accuracy = float(np.mean(np.argmax(probabilities, axis=1) == target))
    return RestorationScore(accuracy=accuracy, mean_probability=float(probabilities[:, target].mean()), n=n)


def restoration_accuracy(
    model: DenoiserModel,
    embedding_or_token: AttackValue,
    classifier: ConceptClassifier,
    target: int,
    n: int,
    seed: Union[int, RandomStream],
    schedule: NoiseSchedule,
    stride: int = 5,
) -> float:
    """Fraction of n generations classified as `target`."""
    return restoration_scores(model, embedding_or_token, classifier, target, n, seed, schedule, stride).accuracy


def neutral_histogram(
    model: DenoiserModel,
    classifier: ConceptClassifier,
    n: int,
    seed: Union[int, RandomStream],
    schedule: NoiseSchedule,
    stride: int = 5,
) -> np.ndarray:
    """Class frequencies of n neutral-prompt generations."""
    samples = generate(model, neutral_prompt(), n, schedule, seed, "ddim", stride)
    counts = np.bincount(classifier.predict(samples), minlength=classifier.n_classes)
    return counts / float(n)


def total_variation(p: np.ndarray, q: np.ndarray) -> float:
    """Half the L1 distance between two histograms."""
    p, q = np.asarray(p, dtype=np.float64), np.asarray(q, dtype=np.float64)
    if p.shape != q.shape:
        raise ValueError(f"Histogram shapes differ: {p.shape} vs {q.shape}")
    return 0.5 * float(np.abs(p - q).sum())


@dataclass
class NeutralPreservation:
    """Neutral-prompt class histograms of the original model and a tuned copy."""
    base_histogram: np.ndarray
    tuned_histogram: np.ndarray
    n: int

    @property
    def total_variation(self) -> float:
        return total_variation(self.base_histogram, self.tuned_histogram)

    def within(self, bound: float) -> bool:
        return self.total_variation <= bound

    def to_dict(self):
        return {
            "n": self.n,
            "base_histogram": self.base_histogram.tolist(),
            "tuned_histogram": self.tuned_histogram.tolist(),
            "total_variation": self.total_variation,
        }


def neutral_preservation(
    base: DenoiserModel,
    tuned: DenoiserModel,
    classifier: ConceptClassifier,
    n: int,
    seed: Union[int, RandomStream],
    schedule: NoiseSchedule,
    stride: int = 5,
) -> NeutralPreservation:
    """
    Compare what `base` and `tuned` generate for the neutral prompt.

    Both models are sampled from the same stream, so identical models give
    identical histograms.

    Raises:
        ValueError: If n < 1
    """
    if n < 1:
        raise ValueError(f"n must be at least 1, got {n}")
    stream = as_stream(seed)
    return NeutralPreservation(
        base_histogram=neutral_histogram(base, classifier, n, stream.spawn("neutral"), schedule, stride),
        tuned_histogram=neutral_histogram(tuned, classifier, n, stream.spawn("neutral"), schedule, stride),
        n=n,
    )
