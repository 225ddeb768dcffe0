"""Shared fine-tuning loop for the gradient-based erasure methods."""

import logging
from typing import Callable, Dict, List, Sequence

from tqdm.auto import tqdm

from utils.autodiff.optim import Optimizer, OptimizerState
from utils.autodiff.rng import RandomStream
from utils.autodiff.tensor import Tensor
from utils.conditioning.model import DenoiserModel

logger = logging.getLogger(__name__)

ESD_PARAMETER_SETS = ("xattn", "full")


def gather_parameters(model: DenoiserModel, names: Sequence[str] = (), groups: Sequence[str] = ()) -> Dict[str, Tensor]:
    """Collect parameters by exact name and by group prefix."""
    selected = dict(model.parameters(*groups)) if groups else {}
    for name in names:
        selected[name] = model[name]
    if not selected:
        raise ValueError("No parameters selected for fine-tuning")
    return selected


class ErasureFinetuner:
    """
    Runs `steps` Adam steps on a loss closure over a parameter subset of the
    model copy being erased.

    Args:
        method: Method tag used in progress output
        params: Parameters to update
        learning_rate: Adam learning rate
        verbose: Whether to log progress
    """

    def __init__(self, method: str, params: Dict[str, Tensor], learning_rate: float, verbose: bool = False):
        self.method = method
        self.optimizer = Optimizer(params, OptimizerState(kind="adam", learning_rate=learning_rate))
        self.verbose = verbose

    def _log(self, message: str) -> None:
        """Log message if verbose mode is enabled."""
        if self.verbose:
            logger.info(message)

    def run(self, steps: int, loss_fn: Callable[[RandomStream], Tensor], stream: RandomStream) -> List[float]:
        """Minimize loss_fn, which draws its batch from the stream it is given."""
        losses: List[float] = []
        self._log(f"Erasing with {self.method}: {steps} steps over {len(self.optimizer.params)} tensors")
        for step in tqdm(range(steps), desc=f"Erasing ({self.method})", disable=not self.verbose):
            loss = loss_fn(stream)
            loss.backward()
            self.optimizer.step()
            self.optimizer.zero_grad()
            losses.append(loss.item())
        if losses:
            self._log(f"{self.method}: loss {losses[0]:.4f} -> {losses[-1]:.4f}")
        return losses
