"""
Embedding atlas: 2-D principal-component projection of labelled embeddings
with per-label cluster statistics.
"""

import logging
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd
from sklearn.metrics import silhouette_samples, silhouette_score

from utils.autodiff.tensor import Tensor

logger = logging.getLogger(__name__)

SILHOUETTE_METRIC = "cosine"
RANK_TOLERANCE = 1e-12

LabeledEmbedding = Tuple[str, Union[np.ndarray, Tensor]]


class DegenerateProjectionError(ValueError):
    """Raised when the embeddings have no spread to project."""


@dataclass
class AtlasReport:
    """
    Projected coordinates plus cluster statistics.

    Attributes:
        labels: Source label per embedding
        coordinates: Projection [n x 2]
        components: Principal directions [2 x dim], orthonormal rows
        explained_variance: Covariance eigenvalues of the two components
        silhouette: Mean cosine silhouette over the scored labels, or None
            when fewer than two labels are scored
        label_silhouette: Mean silhouette per scored label
        centroid_spread: Mean Euclidean distance to the label centroid
    """
    labels: List[str]
    coordinates: np.ndarray
    components: np.ndarray
    explained_variance: np.ndarray
    silhouette: Optional[float] = None
    label_silhouette: Dict[str, float] = field(default_factory=dict)
    centroid_spread: Dict[str, float] = field(default_factory=dict)

    def unique_labels(self) -> List[str]:
        return list(dict.fromkeys(self.labels))

    def to_frame(self) -> pd.DataFrame:
        """(label, x, y) rows in input order."""
        return pd.DataFrame(
            {"label": self.labels, "x": self.coordinates[:, 0], "y": self.coordinates[:, 1]},
            columns=["label", "x", "y"],
        )

    def statistics_frame(self) -> pd.DataFrame:
        rows = [
            {
                "label": label,
                "count": self.labels.count(label),
                "centroid_spread": self.centroid_spread.get(label),
                "silhouette": self.label_silhouette.get(label),
            }
            for label in self.unique_labels()
        ]
        return pd.DataFrame(rows, columns=["label", "count", "centroid_spread", "silhouette"])

    def to_dict(self) -> Dict:
        return {
            "silhouette": self.silhouette,
            "silhouette_metric": SILHOUETTE_METRIC,
            "label_silhouette": dict(self.label_silhouette),
            "centroid_spread": dict(self.centroid_spread),
            "explained_variance": self.explained_variance.tolist(),
            "components": self.components.tolist(),
        }


def _as_matrix(labeled: Sequence[LabeledEmbedding]) -> Tuple[List[str], np.ndarray]:
    labels, rows = [], []
    for label, embedding in labeled:
        values = embedding.data if isinstance(embedding, Tensor) else np.asarray(embedding, dtype=np.float64)
        labels.append(str(label))
        rows.append(values.reshape(-1))
    dims = {row.size for row in rows}
    if len(dims) > 1:
        raise ValueError(f"Embeddings have mixed dimensions: {sorted(dims)}")
    return labels, np.stack(rows)


def principal_components(matrix: np.ndarray) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """
    Top-2 principal directions of a centred matrix via the covariance eigendecomposition.

    Returns:
        (centred matrix, components [2 x dim], eigenvalues [2])

    Raises:
        DegenerateProjectionError: If every row is identical
    """
    centred = matrix - matrix.mean(axis=0, keepdims=True)
    covariance = centred.T @ centred / max(matrix.shape[0] - 1, 1)
    eigenvalues, eigenvectors = np.linalg.eigh(covariance)
    if eigenvalues[-1] <= RANK_TOLERANCE:
        raise DegenerateProjectionError("All embeddings are identical; no direction to project onto")
    order = np.argsort(eigenvalues)[::-1][:2]
    components = eigenvectors[:, order].T.copy()
    # sign convention: largest-magnitude coordinate of each direction is positive
    for row in components:
        if row[np.argmax(np.abs(row))] < 0:
            row *= -1.0
    return centred, components, np.clip(eigenvalues[order], 0.0, None)


def centroid_spread(matrix: np.ndarray) -> float:
    """Mean Euclidean distance of rows to their centroid."""
    return float(np.linalg.norm(matrix - matrix.mean(axis=0, keepdims=True), axis=1).mean())


def embedding_atlas(
    labeled: Sequence[LabeledEmbedding],
    silhouette_labels: Optional[Sequence[str]] = None,
) -> AtlasReport:
    """
    Project labelled embeddings to 2-D and summarize their clusters.

    Args:
        labeled: (source label, embedding) pairs
        silhouette_labels: Labels entering the silhouette statistic
            (default: all labels)

    Returns:
        AtlasReport

    Raises:
        ValueError: Fewer than two embeddings
        DegenerateProjectionError: All embeddings identical

    Example usage:
        >>> report = embedding_atlas([("ti-base", v1), ("ti-esd", v2), ("as", v3)])
        >>> report.to_frame()
    """
    if len(labeled) < 2:
        raise ValueError(f"The atlas needs at least two embeddings, got {len(labeled)}")
    labels, matrix = _as_matrix(labeled)
    centred, components, variance = principal_components(matrix)
    coordinates = centred @ components.T

    spread = {}
    for label in dict.fromkeys(labels):
        mask = np.array([item == label for item in labels])
        spread[label] = centroid_spread(matrix[mask])

    scored = list(dict.fromkeys(labels)) if silhouette_labels is None else list(silhouette_labels)
    mask = np.array([label in scored for label in labels])
    scored_labels = np.array(labels)[mask]
    silhouette, label_silhouette = None, {}
    if 2 <= len(set(scored_labels)) <= mask.sum() - 1:
        points = matrix[mask]
        silhouette = float(silhouette_score(points, scored_labels, metric=SILHOUETTE_METRIC))
        per_point = silhouette_samples(points, scored_labels, metric=SILHOUETTE_METRIC)
        for label in dict.fromkeys(scored_labels):
            label_silhouette[str(label)] = float(per_point[scored_labels == label].mean())
    else:
        logger.info("Silhouette undefined for fewer than two scored labels")

    return AtlasReport(
        labels=labels,
        coordinates=coordinates,
        components=components,
        explained_variance=variance,
        silhouette=silhouette,
        label_silhouette=label_silhouette,
        centroid_spread=spread,
    )
