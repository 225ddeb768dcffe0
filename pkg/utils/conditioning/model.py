"""Parameters of the conditional noise predictor and its text encoder."""

import hashlib
from dataclasses import dataclass, asdict
from typing import Dict, Iterable, Optional, Sequence, Tuple

import numpy as np

from utils.autodiff.rng import RandomStream
from utils.autodiff.tensor import Tensor

PARAMETER_GROUPS = ("trunk", "attention", "encoder")


@dataclass(frozen=True)
class DenoiserConfig:
    """Architecture sizes of the toy denoiser."""
    data_dim: int = 2
    time_dim: int = 16
    hidden_dim: int = 64
    embed_dim: int = 16
    cond_dim: int = 16
    attn_dim: int = 16

    def __post_init__(self):
        """Validate configuration after initialization."""
        for name, value in asdict(self).items():
            if value < 1:
                raise ValueError(f"{name} must be positive, got {value}")
        if self.time_dim % 2:
            raise ValueError(f"time_dim must be even, got {self.time_dim}")


def _parameter_shapes(config: DenoiserConfig, vocab_size: int) -> Dict[str, Tuple[int, int]]:
    c = config
    return {
        "trunk.W_in_z": (c.data_dim, c.hidden_dim),
        "trunk.W_in_t": (c.time_dim, c.hidden_dim),
        "trunk.b_in": (1, c.hidden_dim),
        "trunk.W_hidden": (c.hidden_dim, c.hidden_dim),
        "trunk.b_hidden": (1, c.hidden_dim),
        "trunk.W_head": (c.hidden_dim, c.data_dim),
        "trunk.b_head": (1, c.data_dim),
        "attention.W_query": (c.hidden_dim, c.attn_dim),
        # key/value projections act on column vectors: k_j = W_key @ c_j
        "attention.W_key": (c.attn_dim, c.cond_dim),
        "attention.W_value": (c.attn_dim, c.cond_dim),
        "attention.W_out": (c.attn_dim, c.hidden_dim),
        "encoder.token_table": (vocab_size, c.embed_dim),
        "encoder.W_1": (c.embed_dim, c.cond_dim),
        "encoder.b_1": (1, c.cond_dim),
        "encoder.W_2": (c.cond_dim, c.cond_dim),
        "encoder.b_2": (1, c.cond_dim),
    }


class DenoiserModel:
    """
    Parameters theta of epsilon_theta (MLP trunk plus one cross-attention
    block) together with the token-embedding table and the text encoder.

    Parameters are grouped by name prefix: `trunk`, `attention`, `encoder`.
    """

    def __init__(
        self,
        config: DenoiserConfig,
        vocab: Sequence[str],
        params: Dict[str, Tensor],
    ):
        self.config = config
        self.vocab: Tuple[str, ...] = tuple(vocab)
        expected = _parameter_shapes(config, len(self.vocab))
        missing = set(expected) - set(params)
        if missing:
            raise ValueError(f"Missing parameters: {sorted(missing)}")
        for name, shape in expected.items():
            if params[name].shape != shape:
                raise ValueError(f"Parameter '{name}' has shape {params[name].shape}, expected {shape}")
        self._params = {name: params[name] for name in expected}
        self.last_conditioning = None

    @classmethod
    def initialize(
        cls,
        vocab: Sequence[str],
        stream: RandomStream,
        config: Optional[DenoiserConfig] = None,
    ) -> "DenoiserModel":
        """Random initialization: weights ~ N(0, 1/fan_in), biases zero, table ~ N(0, 1)."""
        config = config or DenoiserConfig()
        params = {}
        for name, shape in _parameter_shapes(config, len(vocab)).items():
            leaf = name.split(".", 1)[1]
            if leaf.startswith("b_"):
                values = np.zeros(shape)
            elif name == "encoder.token_table":
                values = stream.spawn(name).normal(shape)
            else:
                fan_in = shape[1] if name in ("attention.W_key", "attention.W_value") else shape[0]
                values = stream.spawn(name).normal(shape) / np.sqrt(fan_in)
                if name == "trunk.W_head":
                    values *= 0.1
            params[name] = Tensor(values, requires_grad=True, name=name)
        return cls(config, vocab, params)

    def parameters(self, *groups: str) -> Dict[str, Tensor]:
        """Named parameters, optionally restricted to groups."""
        for group in groups:
            if group not in PARAMETER_GROUPS:
                raise ValueError(f"Unknown parameter group '{group}', expected one of {PARAMETER_GROUPS}")
        if not groups:
            return dict(self._params)
        return {n: p for n, p in self._params.items() if n.split(".", 1)[0] in groups}

    def __getitem__(self, name: str) -> Tensor:
        return self._params[name]

    def token_index(self, token: str) -> int:
        try:
            return self.vocab.index(token)
        except ValueError:
            raise KeyError(f"Unknown token '{token}'") from None

    def copy(self) -> "DenoiserModel":
        """Deep copy with distinct storage."""
        params = {
            name: Tensor(p.data.copy(), requires_grad=True, name=name)
            for name, p in self._params.items()
        }
        return DenoiserModel(self.config, self.vocab, params)

    def state_dict(self) -> Dict[str, np.ndarray]:
        return {name: p.data.copy() for name, p in self._params.items()}

    @classmethod
    def from_state_dict(
        cls,
        state: Dict[str, np.ndarray],
        vocab: Sequence[str],
        config: Optional[DenoiserConfig] = None,
    ) -> "DenoiserModel":
        params = {name: Tensor(values, requires_grad=True, name=name) for name, values in state.items()}
        return cls(config or DenoiserConfig(), vocab, params)

    def checksum(self, groups: Iterable[str] = ()) -> str:
        """SHA-256 over parameter names and bytes (all groups by default)."""
        if isinstance(groups, str):
            groups = (groups,)
        digest = hashlib.sha256()
        for name, param in sorted(self.parameters(*groups).items()):
            digest.update(name.encode("utf-8"))
            digest.update(np.ascontiguousarray(param.data, dtype="<f8").tobytes())
        return digest.hexdigest()

    def zero_grad(self) -> None:
        for param in self._params.values():
            param.zero_grad()

    def __repr__(self) -> str:
        count = sum(p.size for p in self._params.values())
        return f"DenoiserModel(parameters={count}, vocab={len(self.vocab)})"
