"""
Transfer matrices: restoration accuracy of every attack input on every model.
"""

import logging
from dataclasses import dataclass, field
from typing import Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from multiprocess import Pool
from tqdm.auto import tqdm

from utils.autodiff.rng import RandomStream
from utils.conditioning.model import DenoiserModel
from utils.diffusion.schedule import NoiseSchedule
from utils.metrics.classifier import ConceptClassifier
from utils.metrics.restoration import AttackValue, RestorationScore, restoration_scores

logger = logging.getLogger(__name__)

BASE_LABEL = "base"
SCORE_KINDS = ("accuracy", "mean_probability")


@dataclass
class AttackInput:
    """
    One row of the matrix: a literal token, a single embedding, or one
    embedding per model (e.g. per-model candidate selection).

    Attributes:
        attack_id: Row identifier
        token: Literal token for the prompt [NEUTRAL, token]
        embedding: Embedding bound at S*
        per_model: Model label -> embedding, overriding `embedding` per column
        white_box_model: Label of the model the attack was optimized on, if any
    """
    attack_id: str
    token: Optional[str] = None
    embedding: Optional[np.ndarray] = None
    per_model: Dict[str, np.ndarray] = field(default_factory=dict)
    white_box_model: Optional[str] = None

    def __post_init__(self):
        """Validate that the attack carries exactly one kind of input."""
        kinds = sum([self.token is not None, self.embedding is not None, bool(self.per_model)])
        if kinds == 0:
            raise ValueError(f"Attack '{self.attack_id}' has neither a token nor an embedding")
        if self.token is not None and kinds > 1:
            raise ValueError(f"Attack '{self.attack_id}' mixes a literal token with embeddings")

    def value_for(self, model_label: str) -> AttackValue:
        if model_label in self.per_model:
            return self.per_model[model_label]
        if self.embedding is not None:
            return self.embedding
        if self.token is not None:
            return self.token
        raise KeyError(f"Attack '{self.attack_id}' has no embedding for model '{model_label}'")


@dataclass
class TransferMatrix:
    """
    Restoration scores [attacks x models] with sample counts and white-box flags.

    The average column is taken over the non-reference columns (the unlearned
    models); reference columns hold the unerased base model.
    """
    attacks: List[str]
    models: List[str]
    accuracy: np.ndarray
    mean_probability: np.ndarray
    counts: np.ndarray
    white_box: np.ndarray
    reference_models: List[str] = field(default_factory=list)

    def __post_init__(self):
        """Validate shapes and ranges."""
        shape = (len(self.attacks), len(self.models))
        for name in ("accuracy", "mean_probability", "counts", "white_box"):
            values = np.asarray(getattr(self, name)).reshape(shape)
            setattr(self, name, values)
        if self.accuracy.size and (self.accuracy.min() < 0 or self.accuracy.max() > 1):
            raise ValueError("Accuracy cells must lie in [0, 1]")

    def _values(self, kind: str) -> np.ndarray:
        if kind not in SCORE_KINDS:
            raise ValueError(f"Unknown score kind '{kind}', expected one of {SCORE_KINDS}")
        return self.accuracy if kind == "accuracy" else self.mean_probability

    def _average_columns(self) -> List[int]:
        columns = [j for j, label in enumerate(self.models) if label not in self.reference_models]
        return columns or list(range(len(self.models)))

    def row_averages(self, kind: str = "accuracy") -> np.ndarray:
        values = self._values(kind)
        if not self.models:
            return np.zeros(len(self.attacks))
        return values[:, self._average_columns()].mean(axis=1)

    def cell(self, attack_id: str, model_label: str, kind: str = "accuracy") -> float:
        return float(self._values(kind)[self.attacks.index(attack_id), self.models.index(model_label)])

    def to_frame(self, kind: str = "accuracy", include_average: bool = True) -> pd.DataFrame:
        """DataFrame with attack ids as index and model ids (plus average) as columns."""
        frame = pd.DataFrame(self._values(kind), index=pd.Index(self.attacks, name="attack"), columns=self.models)
        if include_average:
            frame["average"] = self.row_averages(kind)
        return frame

    def ranking(self, kind: str = "accuracy") -> Dict[str, Tuple[Optional[str], Optional[str]]]:
        """Best and second-best attack per column; ties keep row order."""
        values = self._values(kind)
        result = {}
        for j, label in enumerate(self.models):
            order = sorted(range(len(self.attacks)), key=lambda i: (-values[i, j], i))
            best = self.attacks[order[0]] if order else None
            second = self.attacks[order[1]] if len(order) > 1 else None
            result[label] = (best, second)
        return result

    def to_dict(self) -> Dict:
        return {
            "attacks": list(self.attacks),
            "models": list(self.models),
            "reference_models": list(self.reference_models),
            "accuracy": self.accuracy.tolist(),
            "mean_probability": self.mean_probability.tolist(),
            "counts": self.counts.astype(int).tolist(),
            "white_box": self.white_box.astype(bool).tolist(),
            "average": self.row_averages().tolist(),
            "ranking": {label: list(pair) for label, pair in self.ranking().items()},
            "classified_as_target": "argmax",
        }


def cell_stream(seed: int, attack_id: str, model_label: str) -> RandomStream:
    """Stream of one cell; independent of evaluation order and worker count."""
    return RandomStream(seed, ("cell", attack_id, model_label))


def _score_cell(task) -> RestorationScore:
    model, value, classifier, target, n, stream, schedule, stride, sampler = task
    return restoration_scores(model, value, classifier, target, n, stream, schedule, stride, sampler)


def build_transfer_matrix(
    base: Optional[DenoiserModel],
    unlearned: Mapping[str, DenoiserModel],
    attacks: Sequence[AttackInput],
    classifier: ConceptClassifier,
    target: int,
    n: int,
    seed: int,
    schedule: NoiseSchedule,
    stride: int = 5,
    workers: int = 1,
    sampler: str = "ddim",
    verbose: bool = False,
) -> TransferMatrix:
    """
    Fill every (attack, model) cell with restoration scores.

    Args:
        base: Unerased model (column "base", excluded from averages) or None
        unlearned: Ordered mapping label -> erased model (an UnlearnedModel's
            `.model` or the model itself)
        attacks: Attack rows
        classifier: Concept classifier
        target: Concept the attacks try to restore
        n: Samples per cell
        seed: Master seed; each cell derives its own stream
        workers: Worker processes for cell evaluation (1 = in-process)
        sampler: "ddim" or "ddpm"

    Returns:
        TransferMatrix with counts == n everywhere
    """
    models: Dict[str, DenoiserModel] = {}
    if base is not None:
        models[BASE_LABEL] = base
    for label, model in unlearned.items():
        models[label] = getattr(model, "model", model)
    labels = list(models)

    tasks, positions = [], []
    for i, attack in enumerate(attacks):
        for j, label in enumerate(labels):
            tasks.append(
                (models[label], attack.value_for(label), classifier, target, n,
                 cell_stream(seed, attack.attack_id, label), schedule, stride, sampler)
            )
            positions.append((i, j))

    if workers > 1 and len(tasks) > 1:
        logger.info(f"Scoring {len(tasks)} cells on {workers} workers")
        with Pool(workers) as pool:
            scores = list(tqdm(pool.imap(_score_cell, tasks), total=len(tasks), desc="Transfer cells", disable=not verbose))
    else:
        scores = [_score_cell(task) for task in tqdm(tasks, desc="Transfer cells", disable=not verbose)]

    shape = (len(attacks), len(labels))
    accuracy, probability = np.zeros(shape), np.zeros(shape)
    counts = np.zeros(shape, dtype=int)
    white_box = np.zeros(shape, dtype=bool)
    for (i, j), score in zip(positions, scores):
        accuracy[i, j] = score.accuracy
        probability[i, j] = score.mean_probability
        counts[i, j] = score.n
    for i, attack in enumerate(attacks):
        if attack.white_box_model in labels:
            white_box[i, labels.index(attack.white_box_model)] = True

    return TransferMatrix(
        attacks=[a.attack_id for a in attacks],
        models=labels,
        accuracy=accuracy,
        mean_probability=probability,
        counts=counts,
        white_box=white_box,
        reference_models=[BASE_LABEL] if base is not None else [],
    )
