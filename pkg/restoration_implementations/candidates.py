"""The candidate set V of per-epoch embedding snapshots."""

from dataclasses import dataclass, field
from typing import Dict, List

import numpy as np
import pandas as pd

from restoration_implementations.config import ASConfig


@dataclass(frozen=True, eq=False)
class CandidateEntry:
    """A read-only snapshot of v taken at the end of an epoch's embedding phase."""
    epoch: int
    embedding: np.ndarray
    loss: float

    def __post_init__(self):
        """Freeze a private copy of the embedding."""
        values = np.array(self.embedding, dtype=np.float64).reshape(-1)
        values.setflags(write=False)
        object.__setattr__(self, "embedding", values)


@dataclass
class CandidateSet:
    """Ordered snapshots with the search configuration and surrogate provenance."""
    entries: List[CandidateEntry]
    config: ASConfig
    provenance: Dict = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.entries)

    def __getitem__(self, index: int) -> CandidateEntry:
        return self.entries[index]

    def embeddings(self) -> np.ndarray:
        """Matrix [len x embed_dim] of all snapshots."""
        return np.stack([entry.embedding for entry in self.entries])

    def losses(self) -> np.ndarray:
        return np.array([entry.loss for entry in self.entries])

    def to_frame(self) -> pd.DataFrame:
        """Flat table (epoch, L_v, embedding components) for export."""
        if not self.entries:
            return pd.DataFrame(columns=["epoch", "loss"])
        matrix = self.embeddings()
        frame = pd.DataFrame(matrix, columns=[f"v{i}" for i in range(matrix.shape[1])])
        frame.insert(0, "loss", self.losses())
        frame.insert(0, "epoch", [entry.epoch for entry in self.entries])
        return frame
