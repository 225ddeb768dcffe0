"""Erasure specifications and the unlearned-model record."""

from dataclasses import dataclass, field, asdict
from typing import Dict, List, Optional, Tuple

from utils.conditioning.model import DenoiserModel

ERASURE_METHODS = ("esd", "ca", "fmn", "uce")

# Fine-tuning budgets rescaled from large-UNet settings to the toy denoiser
DEFAULT_BUDGETS: Dict[str, Tuple[int, float]] = {
    "esd": (400, 1e-3),
    "ca": (400, 1e-3),
    "fmn": (150, 1e-3),
    "uce": (0, 0.0),
}


@dataclass
class ErasureSpec:
    """
    Which concept to erase, how, and with what budget.

    `steps` and `learning_rate` default to the method's entry in
    DEFAULT_BUDGETS. `anchor` defaults to the world's anchor map (CA only).
    `preserve_tokens` defaults to every non-target concept plus NEUTRAL (UCE only).
    """
    method: str
    target: int
    steps: Optional[int] = None
    learning_rate: Optional[float] = None
    negative_guidance: float = 1.0
    anchor: Optional[int] = None
    full_trunk: bool = False
    preserve_tokens: Optional[Tuple[str, ...]] = None
    edit_target: bool = True
    ridge: float = 1e-6
    batch_size: int = 32

    def __post_init__(self):
        """Validate configuration after initialization."""
        if self.method not in ERASURE_METHODS:
            raise ValueError(f"Unknown erasure method '{self.method}', expected one of {ERASURE_METHODS}")
        if self.target < 0:
            raise ValueError(f"target must be a concept id, got {self.target}")
        default_steps, default_lr = DEFAULT_BUDGETS[self.method]
        if self.steps is None:
            self.steps = default_steps
        if self.learning_rate is None:
            self.learning_rate = default_lr
        if self.steps < 0:
            raise ValueError(f"steps must be non-negative, got {self.steps}")
        if self.method != "uce" and self.learning_rate <= 0:
            raise ValueError(f"learning_rate must be positive, got {self.learning_rate}")
        if self.method == "ca" and self.anchor is not None and self.anchor == self.target:
            raise ValueError(f"CA anchor must differ from the target, both are {self.target}")
        if self.ridge < 0:
            raise ValueError(f"ridge must be non-negative, got {self.ridge}")
        if self.batch_size < 1:
            raise ValueError(f"batch_size must be at least 1, got {self.batch_size}")
        if self.preserve_tokens is not None:
            self.preserve_tokens = tuple(self.preserve_tokens)

    @property
    def label(self) -> str:
        return f"{self.method}-c{self.target}"

    def to_dict(self) -> Dict:
        data = asdict(self)
        if data["preserve_tokens"] is not None:
            data["preserve_tokens"] = list(data["preserve_tokens"])
        return data

    @classmethod
    def from_dict(cls, data: Dict) -> "ErasureSpec":
        return cls(**data)


@dataclass
class UnlearnedModel:
    """An erased copy theta-hat of the base model plus its provenance."""
    model: DenoiserModel
    spec: ErasureSpec
    base_checksum: str
    seed: int
    losses: List[float] = field(default_factory=list)

    @property
    def label(self) -> str:
        return self.spec.label

    def provenance(self) -> Dict:
        return {
            "spec": self.spec.to_dict(),
            "base_checksum": self.base_checksum,
            "seed": self.seed,
            "budget_note": "fine-tuning budgets rescaled for the toy denoiser",
        }
