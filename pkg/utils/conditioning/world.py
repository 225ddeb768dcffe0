"""Synthetic concept universe: mixture components, vocabulary and training sets."""

import math
from dataclasses import dataclass, asdict
from typing import Dict, List, Optional, Tuple

import numpy as np

from utils.autodiff.rng import RandomStream

NEUTRAL_TOKEN = "<neutral>"
PLACEHOLDER_TOKEN = "<S*>"


def concept_token(index: int) -> str:
    return f"c{index}"


@dataclass
class WorldConfig:
    """Configuration of the concept mixture."""
    n_concepts: int = 6
    radius: float = 4.0
    spread: float = 0.3
    points_per_concept: int = 256
    anchor_offset: int = -1  # clockwise neighbour on the regular polygon

    def __post_init__(self):
        """Validate configuration after initialization."""
        if self.n_concepts < 2:
            raise ValueError(f"n_concepts must be at least 2, got {self.n_concepts}")
        if self.spread <= 0 or self.radius <= 0:
            raise ValueError("radius and spread must be positive")
        if self.points_per_concept < 1:
            raise ValueError("points_per_concept must be at least 1")
        if self.anchor_offset % self.n_concepts == 0:
            raise ValueError("anchor_offset must not map a concept onto itself")
        min_distance = 2.0 * self.radius * math.sin(math.pi / self.n_concepts)
        if min_distance < 6.0 * self.spread:
            raise ValueError(
                f"Concepts are not separable: nearest centers are {min_distance:.3f} apart, "
                f"need at least 6 * spread = {6.0 * self.spread:.3f}"
            )


class ConceptWorld:
    """
    K Gaussian concepts placed on a regular polygon, with per-concept training
    sets X and the token vocabulary {NEUTRAL, c_0..c_{K-1}, S*}.
    """

    def __init__(
        self,
        config: WorldConfig,
        centers: np.ndarray,
        train_sets: List[np.ndarray],
    ):
        self.config = config
        self.centers = np.asarray(centers, dtype=np.float64)
        self.train_sets = [np.asarray(x, dtype=np.float64) for x in train_sets]
        self.vocab: Tuple[str, ...] = (
            (NEUTRAL_TOKEN,)
            + tuple(concept_token(k) for k in range(config.n_concepts))
            + (PLACEHOLDER_TOKEN,)
        )
        self.anchor_map: Dict[int, int] = {
            k: (k + config.anchor_offset) % config.n_concepts for k in range(config.n_concepts)
        }
        self._validate()

    @classmethod
    def build(cls, config: Optional[WorldConfig], stream: RandomStream) -> "ConceptWorld":
        """Place the centers and draw N training points per concept."""
        config = config or WorldConfig()
        angles = 2.0 * np.pi * np.arange(config.n_concepts) / config.n_concepts
        centers = config.radius * np.stack([np.cos(angles), np.sin(angles)], axis=1)
        train_sets = [
            centers[k] + config.spread * stream.spawn("train-set", k).normal((config.points_per_concept, 2))
            for k in range(config.n_concepts)
        ]
        return cls(config, centers, train_sets)

    def _validate(self) -> None:
        if len(self.train_sets) != self.n_concepts:
            raise ValueError("One training set per concept is required")
        for k, points in enumerate(self.train_sets):
            if points.ndim != 2 or points.shape[0] == 0 or points.shape[1] != 2:
                raise ValueError(f"Training set for concept {k} must be a non-empty [N x 2] array")
        diffs = self.centers[:, None, :] - self.centers[None, :, :]
        distances = np.sqrt((diffs ** 2).sum(axis=-1))
        off_diagonal = distances[~np.eye(self.n_concepts, dtype=bool)]
        if off_diagonal.min() < 6.0 * self.config.spread:
            raise ValueError("Concept centers violate the separability constraint")

    @property
    def n_concepts(self) -> int:
        return self.config.n_concepts

    def token_index(self, token: str) -> int:
        try:
            return self.vocab.index(token)
        except ValueError:
            raise KeyError(f"Unknown token '{token}'") from None

    def concept_token(self, k: int) -> str:
        self.check_concept(k)
        return concept_token(k)

    def check_concept(self, k: int) -> None:
        if not 0 <= k < self.n_concepts:
            raise ValueError(f"Concept {k} is not in the world (K={self.n_concepts})")

    def sample_training_points(self, k: int, n: int, stream: RandomStream) -> np.ndarray:
        """Draw n points (with replacement) from concept k's training set."""
        self.check_concept(k)
        data = self.train_sets[k]
        return data[stream.choice(len(data), size=n)]

    def sample_mixture(
        self,
        n: int,
        stream: RandomStream,
        spread_scale: float = 1.0,
    ) -> Tuple[np.ndarray, np.ndarray]:
        """Fresh labelled draws from the mixture (uniform over concepts)."""
        labels = stream.choice(self.n_concepts, size=n)
        noise = stream.normal((n, 2)) * self.config.spread * spread_scale
        return self.centers[labels] + noise, labels

    def sample_training_mixture(self, n: int, stream: RandomStream) -> np.ndarray:
        """Draw n points from the pooled training sets."""
        labels = stream.choice(self.n_concepts, size=n)
        rows = [self.train_sets[k][stream.choice(len(self.train_sets[k]))] for k in labels]
        return np.stack(rows)

    def to_dict(self) -> Dict:
        return {"config": asdict(self.config), "vocab": list(self.vocab), "anchor_map": self.anchor_map}
