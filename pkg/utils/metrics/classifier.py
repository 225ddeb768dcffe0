"""
Concept classifier: the detector that decides which concept a generated point shows.
"""

import hashlib
import logging
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Union

import numpy as np
from tqdm.auto import tqdm

from utils.autodiff import functional as F
from utils.autodiff.optim import Optimizer, OptimizerState
from utils.autodiff.rng import RandomStream, as_stream
from utils.autodiff.tensor import Tensor, no_grad
from utils.conditioning.world import ConceptWorld

logger = logging.getLogger(__name__)

ACCURACY_GATE = 0.98


class ClassifierGateError(RuntimeError):
    """Raised when the classifier misses the held-out accuracy gate."""

    def __init__(self, accuracy: float, gate: float = ACCURACY_GATE):
        super().__init__(f"Concept classifier reached held-out accuracy {accuracy:.4f}, below the gate {gate:.2f}")
        self.accuracy = accuracy
        self.gate = gate


@dataclass
class ClassifierConfig:
    """Training budget of the concept classifier."""
    steps: int = 1500
    hidden: int = 32
    learning_rate: float = 1e-2
    batch_size: int = 256
    train_spread_scale: float = 3.0
    holdout: int = 2000

    def __post_init__(self):
        """Validate configuration after initialization."""
        if self.steps < 1 or self.hidden < 1 or self.batch_size < 1 or self.holdout < 1:
            raise ValueError("steps, hidden, batch_size and holdout must all be positive")
        if self.learning_rate <= 0 or self.train_spread_scale <= 0:
            raise ValueError("learning_rate and train_spread_scale must be positive")


@dataclass
class ClassifierReport:
    losses: List[float] = field(default_factory=list)
    holdout_accuracy: float = 0.0


class ConceptClassifier:
    """
    Two-layer network mapping a plane point to K class scores.

    Args:
        params: W_1 [2 x H], b_1 [1 x H], W_2 [H x K], b_2 [1 x K]
        report: Training report (loss trace, held-out accuracy)
    """

    PARAMETER_NAMES = ("W_1", "b_1", "W_2", "b_2")

    def __init__(self, params: Dict[str, Tensor], report: Optional[ClassifierReport] = None):
        missing = set(self.PARAMETER_NAMES) - set(params)
        if missing:
            raise ValueError(f"Missing classifier parameters: {sorted(missing)}")
        self.params = {name: params[name] for name in self.PARAMETER_NAMES}
        self.report = report or ClassifierReport()

    @property
    def n_classes(self) -> int:
        return self.params["W_2"].shape[1]

    @classmethod
    def initialize(cls, n_classes: int, hidden: int, stream: RandomStream) -> "ConceptClassifier":
        params = {
            "W_1": Tensor(stream.spawn("W_1").normal((2, hidden)) / np.sqrt(2.0), requires_grad=True),
            "b_1": Tensor(np.zeros((1, hidden)), requires_grad=True),
            "W_2": Tensor(stream.spawn("W_2").normal((hidden, n_classes)) / np.sqrt(hidden), requires_grad=True),
            "b_2": Tensor(np.zeros((1, n_classes)), requires_grad=True),
        }
        return cls(params)

    def forward(self, points: Tensor) -> Tensor:
        hidden = F.silu(F.linear(points, self.params["W_1"], self.params["b_1"]))
        return F.linear(hidden, self.params["W_2"], self.params["b_2"])

    def predict_proba(self, points: np.ndarray) -> np.ndarray:
        """Softmax class probabilities [n x K]."""
        with no_grad():
            logits = self.forward(Tensor(np.asarray(points, dtype=np.float64).reshape(-1, 2)))
            return F.softmax_rows(logits).data

    def predict(self, points: np.ndarray) -> np.ndarray:
        """Argmax class per point."""
        return np.argmax(self.predict_proba(points), axis=1)

    def accuracy(self, points: np.ndarray, labels: np.ndarray) -> float:
        return float(np.mean(self.predict(points) == np.asarray(labels)))

    def state_dict(self) -> Dict[str, np.ndarray]:
        return {name: p.data.copy() for name, p in self.params.items()}

    @classmethod
    def from_state_dict(cls, state: Dict[str, np.ndarray], report: Optional[ClassifierReport] = None) -> "ConceptClassifier":
        return cls({name: Tensor(values) for name, values in state.items()}, report)

    def checksum(self) -> str:
        digest = hashlib.sha256()
        for name in self.PARAMETER_NAMES:
            digest.update(name.encode("utf-8"))
            digest.update(np.ascontiguousarray(self.params[name].data, dtype="<f8").tobytes())
        return digest.hexdigest()


def train_classifier(
    world: ConceptWorld,
    steps: Optional[int] = None,
    seed: Union[int, RandomStream] = 0,
    config: Optional[ClassifierConfig] = None,
    gate: float = ACCURACY_GATE,
    verbose: bool = False,
) -> ConceptClassifier:
    """
    Cross-entropy training on freshly drawn labelled mixture points.

    Training draws use a widened spread so the regions between concepts are
    covered; the gate is checked on a held-out draw at the world's own spread.

    Raises:
        ClassifierGateError: If held-out accuracy is below `gate`
    """
    config = config or ClassifierConfig()
    steps = config.steps if steps is None else steps
    stream = as_stream(seed)
    classifier = ConceptClassifier.initialize(world.n_concepts, config.hidden, stream.spawn("classifier-init"))
    optimizer = Optimizer(classifier.params, OptimizerState(kind="adam", learning_rate=config.learning_rate))
    train_stream = stream.spawn("classifier-train")

    for step in tqdm(range(steps), desc="Training classifier", disable=not verbose):
        points, labels = world.sample_mixture(config.batch_size, train_stream, spread_scale=config.train_spread_scale)
        loss = F.cross_entropy(classifier.forward(Tensor(points)), labels)
        loss.backward()
        optimizer.step()
        optimizer.zero_grad()
        classifier.report.losses.append(loss.item())

    points, labels = world.sample_mixture(config.holdout, stream.spawn("classifier-holdout"))
    accuracy = classifier.accuracy(points, labels)
    classifier.report.holdout_accuracy = accuracy
    if verbose:
        logger.info(f"Classifier held-out accuracy: {accuracy:.4f}")
    if accuracy < gate:
        logger.error(f"Classifier gate failed: {accuracy:.4f} < {gate:.2f}")
        raise ClassifierGateError(accuracy, gate)
    return classifier
