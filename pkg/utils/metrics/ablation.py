"""
Ablation traces: restoration scores of the running embedding during a search,
with and without the surrogate parameter phases.
"""

import logging
from dataclasses import dataclass, replace
from typing import Dict, List, Mapping, Optional, Union

import numpy as np
import pandas as pd
from tqdm.auto import tqdm

from utils.autodiff.rng import RandomStream, as_stream
from utils.conditioning.model import DenoiserModel
from utils.conditioning.world import ConceptWorld
from utils.diffusion.schedule import NoiseSchedule, build_schedule
from utils.metrics.classifier import ConceptClassifier
from utils.metrics.restoration import restoration_scores
from restoration_implementations.adversarial_search import AdversarialSearch
from restoration_implementations.config import ASConfig

logger = logging.getLogger(__name__)

VARIANTS = ("with_as", "without_as")


def record_epochs(E: int, record_every: int) -> List[int]:
    """Epoch 0 and every multiple of record_every below E."""
    if record_every < 1:
        raise ValueError(f"record_every must be at least 1, got {record_every}")
    return list(range(0, E, record_every))


@dataclass
class AblationTrace:
    """Scores [records x models] of one search variant."""
    variant: str
    epochs: List[int]
    models: List[str]
    accuracy: np.ndarray
    mean_probability: np.ndarray

    def end_mean(self, kind: str = "accuracy", window: int = 3) -> Dict[str, float]:
        """Per-model mean over the last `window` records."""
        values = self.accuracy if kind == "accuracy" else self.mean_probability
        tail = values[-window:] if len(self.epochs) else values
        return {label: float(tail[:, j].mean()) for j, label in enumerate(self.models)}

    def to_frame(self) -> pd.DataFrame:
        """Long table (variant, epoch, model, accuracy, mean_probability)."""
        rows = [
            {
                "variant": self.variant,
                "epoch": epoch,
                "model": label,
                "accuracy": float(self.accuracy[i, j]),
                "mean_probability": float(self.mean_probability[i, j]),
            }
            for i, epoch in enumerate(self.epochs)
            for j, label in enumerate(self.models)
        ]
        return pd.DataFrame(rows, columns=["variant", "epoch", "model", "accuracy", "mean_probability"])


@dataclass
class AblationReport:
    with_as: AblationTrace
    without_as: AblationTrace

    def traces(self) -> List[AblationTrace]:
        return [self.with_as, self.without_as]

    def to_frame(self) -> pd.DataFrame:
        return pd.concat([trace.to_frame() for trace in self.traces()], ignore_index=True)

    def models_favoring_search(self, kind: str = "accuracy", window: int = 3) -> List[str]:
        """Models whose with-search end-mean is at least the without-search end-mean."""
        with_as = self.with_as.end_mean(kind, window)
        without_as = self.without_as.end_mean(kind, window)
        return [label for label in with_as if with_as[label] >= without_as[label]]


def _trace_variant(
    variant: str,
    surrogate: DenoiserModel,
    world: ConceptWorld,
    target: int,
    cfg: ASConfig,
    models: Mapping[str, DenoiserModel],
    classifier: ConceptClassifier,
    epochs: List[int],
    stream: RandomStream,
    schedule: NoiseSchedule,
    n: int,
    stride: int,
    verbose: bool,
) -> AblationTrace:
    wanted = set(epochs)
    snapshots: Dict[int, np.ndarray] = {}

    def snapshot(epoch: int, v: np.ndarray) -> None:
        if epoch in wanted:
            snapshots[epoch] = v.copy()

    search = AdversarialSearch(surrogate, world, target, cfg, schedule, verbose=verbose)
    search.run(stream.spawn("search"), on_epoch_end=snapshot)

    labels = list(models)
    accuracy = np.zeros((len(epochs), len(labels)))
    probability = np.zeros((len(epochs), len(labels)))
    for i, epoch in enumerate(tqdm(epochs, desc=f"Scoring {variant}", disable=not verbose)):
        for j, label in enumerate(labels):
            # scoring streams ignore the variant so both traces share draws
            score = restoration_scores(
                models[label], snapshots[epoch], classifier, target, n,
                stream.spawn("score", epoch, label), schedule, stride,
            )
            accuracy[i, j] = score.accuracy
            probability[i, j] = score.mean_probability
    return AblationTrace(variant, list(epochs), labels, accuracy, probability)


def ablation_trace(
    surrogate: DenoiserModel,
    world: ConceptWorld,
    target: int,
    cfg: ASConfig,
    unlearned: Mapping[str, DenoiserModel],
    classifier: ConceptClassifier,
    record_every: int,
    seed: Union[int, RandomStream] = 0,
    schedule: Optional[NoiseSchedule] = None,
    n: int = 100,
    stride: int = 5,
    verbose: bool = False,
) -> AblationReport:
    """
    Score the running embedding every `record_every` epochs on every unlearned
    model, once with the full alternating search and once with the parameter
    phases switched off.

    Both runs start from the same seed, so they share v0 and the per-epoch
    image draws.
    """
    schedule = schedule or build_schedule()
    epochs = record_epochs(cfg.E, record_every)
    models = {label: getattr(model, "model", model) for label, model in unlearned.items()}
    stream = as_stream(seed).spawn("ablation")
    variants = {
        "with_as": replace(cfg, update_surrogate=True),
        "without_as": replace(cfg, update_surrogate=False),
    }
    traces = {}
    for variant, variant_cfg in variants.items():
        logger.info(f"Ablation variant '{variant}': {len(epochs)} records on {len(models)} models")
        traces[variant] = _trace_variant(
            variant, surrogate, world, target, variant_cfg, models, classifier,
            epochs, stream, schedule, n, stride, verbose,
        )
    return AblationReport(with_as=traces["with_as"], without_as=traces["without_as"])
