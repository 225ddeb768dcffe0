"""Choosing one embedding from a candidate set."""

import logging
import math
from dataclasses import dataclass
from typing import Dict, List, Mapping, Optional

import numpy as np
from multiprocess import Pool
from tqdm.auto import tqdm

from utils.autodiff.rng import as_stream
from utils.conditioning.model import DenoiserModel
from utils.diffusion.schedule import NoiseSchedule, build_schedule
from utils.metrics.classifier import ConceptClassifier
from utils.metrics.restoration import restoration_scores
from restoration_implementations.candidates import CandidateSet

logger = logging.getLogger(__name__)

SELECTION_MODES = ("final_loss", "best_of_V")
SURROGATE_KEY = "surrogate"


@dataclass
class CandidateChoice:
    """The chosen entry; `score` is its restoration accuracy when models were given."""
    index: int
    epoch: int
    embedding: np.ndarray
    score: Optional[float] = None


def final_window(candidates: CandidateSet) -> List[int]:
    """Indices of the last ceil(E/f) snapshots."""
    size = math.ceil(len(candidates) / candidates.config.f)
    return list(range(len(candidates) - size, len(candidates)))


def _lowest_loss(candidates: CandidateSet) -> int:
    window = final_window(candidates)
    losses = candidates.losses()[window]
    return window[int(np.argmin(losses))]


def _score_task(task) -> float:
    model, embedding, classifier, target, n, stream, schedule, stride = task
    return restoration_scores(model, embedding, classifier, target, n, stream, schedule, stride).accuracy


def select_candidate(
    candidates: CandidateSet,
    mode: str = "final_loss",
    models: Optional[Mapping[str, DenoiserModel]] = None,
    classifier: Optional[ConceptClassifier] = None,
    target: Optional[int] = None,
    n: int = 100,
    seed: int = 0,
    schedule: Optional[NoiseSchedule] = None,
    stride: int = 5,
    subsample: Optional[int] = None,
    workers: int = 1,
    verbose: bool = False,
) -> Dict[str, CandidateChoice]:
    """
    Pick an embedding per model.

    "final_loss" takes the lowest recorded L_v among the last ceil(E/f)
    snapshots and uses only the surrogate's record, so every model receives
    the same choice. "best_of_V" generates under every candidate on every
    model and keeps the per-model argmax of restoration accuracy. Each model
    scores all candidates with one shared stream, so the final-loss choice
    scored under "best_of_V" can never beat the argmax.

    Args:
        candidates: Candidate set V
        mode: "final_loss" or "best_of_V"
        models: Label -> model; required for "best_of_V", optional for
            "final_loss" (then the choice is also scored)
        classifier: Concept classifier used for scoring
        target: Concept being restored
        n: Samples per (candidate, model) pair
        seed: Seed of the selection streams
        subsample: Score only this many evenly spaced candidates (the
            final-loss choice is always included)
        workers: Worker processes for scoring

    Returns:
        Model label -> CandidateChoice, or {"surrogate": choice} when
        no models were given

    Raises:
        ValueError: Empty set, unknown mode, or missing models/classifier
    """
    if len(candidates) == 0:
        raise ValueError("Cannot select from an empty candidate set")
    if mode not in SELECTION_MODES:
        raise ValueError(f"Unknown selection mode '{mode}', expected one of {SELECTION_MODES}")
    if mode == "best_of_V" and not models:
        raise ValueError("best_of_V selection requires at least one target model")
    if models and (classifier is None or target is None):
        raise ValueError("Scoring candidates requires a classifier and a target")

    fallback = _lowest_loss(candidates)
    if not models:
        entry = candidates[fallback]
        return {SURROGATE_KEY: CandidateChoice(fallback, entry.epoch, entry.embedding.copy())}

    schedule = schedule or build_schedule()
    models = {label: getattr(model, "model", model) for label, model in models.items()}
    if mode == "final_loss":
        indices = [fallback]
    elif subsample is not None and subsample < len(candidates):
        indices = sorted(set(np.linspace(0, len(candidates) - 1, subsample).round().astype(int).tolist()) | {fallback})
    else:
        indices = list(range(len(candidates)))

    stream = as_stream(seed).spawn("select")
    tasks, keys = [], []
    for label, model in models.items():
        for index in indices:
            tasks.append(
                (model, candidates[index].embedding, classifier, target, n, stream.spawn(label), schedule, stride)
            )
            keys.append((label, index))

    if workers > 1 and len(tasks) > 1:
        with Pool(workers) as pool:
            scores = list(tqdm(pool.imap(_score_task, tasks), total=len(tasks), desc="Scoring candidates", disable=not verbose))
    else:
        scores = [_score_task(task) for task in tqdm(tasks, desc="Scoring candidates", disable=not verbose)]

    table: Dict[str, Dict[int, float]] = {label: {} for label in models}
    for (label, index), score in zip(keys, scores):
        table[label][index] = score

    choices = {}
    for label, row in table.items():
        # ties keep the earliest index
        best = max(row, key=lambda index: (row[index], -index))
        entry = candidates[best]
        choices[label] = CandidateChoice(best, entry.epoch, entry.embedding.copy(), row[best])
        logger.info(f"Selected candidate {best} (epoch {entry.epoch}) for '{label}' with accuracy {row[best]:.3f}")
    return choices
