"""Configuration of the adversarial embedding search."""

from dataclasses import dataclass, asdict
from typing import Dict

V0_POLICIES = ("table_mean", "target_token")
INNER_LOSSES = ("stop_gradient", "frozen_reference")


@dataclass
class ASConfig:
    """
    Budgets and rates of the alternating search.

    Attributes:
        E: Total epochs (one candidate snapshot per epoch)
        I_v: Embedding iterations per epoch
        f: Parameter-update frequency; updates run at epochs e with e % f == 0
        I_theta: Parameter iterations per update
        lr_v: Embedding learning rate
        wd_v: Embedding (decoupled) weight decay
        lr_theta: Surrogate learning rate
        v0_policy: "table_mean" (table mean plus noise) or "target_token"
        v0_noise: Scale of the Gaussian noise added under "table_mean"
        batch_size: (t, eps) pairs per iteration, all sharing the epoch's x0
        update_surrogate: False disables every parameter phase (no-search variant)
        inner_loss: "stop_gradient" targets the current surrogate's neutral
            prediction; "frozen_reference" targets a frozen copy of the original
        track_reference_divergence: Record both inner losses per parameter iteration
        record_witnesses: Record triangle-bound witnesses during parameter phases
    """
    E: int = 300
    I_v: int = 10
    f: int = 5
    I_theta: int = 5
    lr_v: float = 0.1
    wd_v: float = 0.1
    lr_theta: float = 1e-3
    v0_policy: str = "table_mean"
    v0_noise: float = 0.02
    batch_size: int = 16
    update_surrogate: bool = True
    inner_loss: str = "stop_gradient"
    track_reference_divergence: bool = False
    record_witnesses: bool = True

    def __post_init__(self):
        """Validate configuration after initialization."""
        for name in ("E", "I_v", "I_theta", "f", "batch_size"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be at least 1, got {getattr(self, name)}")
        for name in ("lr_v", "lr_theta"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive, got {getattr(self, name)}")
        if self.wd_v < 0 or self.v0_noise < 0:
            raise ValueError("wd_v and v0_noise must be non-negative")
        if self.v0_policy not in V0_POLICIES:
            raise ValueError(f"Unknown v0_policy '{self.v0_policy}', expected one of {V0_POLICIES}")
        if self.inner_loss not in INNER_LOSSES:
            raise ValueError(f"Unknown inner_loss '{self.inner_loss}', expected one of {INNER_LOSSES}")

    def update_epochs(self):
        """Epochs at which a parameter phase runs."""
        if not self.update_surrogate:
            return []
        return [e for e in range(self.E) if e % self.f == 0]

    def to_dict(self) -> Dict:
        return asdict(self)
