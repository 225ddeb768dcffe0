"""Prompt specifications, including the placeholder-bound prompt [NEUTRAL, S*]."""

from dataclasses import dataclass
from typing import Optional, Tuple, Union

import numpy as np

from utils.autodiff.tensor import Tensor
from utils.conditioning.world import NEUTRAL_TOKEN, PLACEHOLDER_TOKEN, concept_token


@dataclass(frozen=True)
class PromptSpec:
    """Ordered tokens with an optional learnable embedding bound at S*."""
    tokens: Tuple[str, ...]
    placeholder_slot: Optional[int] = None
    bound_embedding: Optional[Tensor] = None

    def __post_init__(self):
        """Validate the placeholder binding."""
        if not self.tokens:
            raise ValueError("A prompt needs at least one token")
        if self.placeholder_slot is not None:
            if not 0 <= self.placeholder_slot < len(self.tokens):
                raise ValueError(f"placeholder_slot {self.placeholder_slot} is out of range")
            if self.tokens[self.placeholder_slot] != PLACEHOLDER_TOKEN:
                raise ValueError(f"placeholder_slot must point at {PLACEHOLDER_TOKEN}")
        if (self.placeholder_slot is None) != (self.bound_embedding is None):
            raise ValueError("bound_embedding must be given exactly when placeholder_slot is set")


def neutral_prompt() -> PromptSpec:
    """The prompt y' with the target token removed."""
    return PromptSpec((NEUTRAL_TOKEN,))


def literal_prompt(token: str) -> PromptSpec:
    return PromptSpec((NEUTRAL_TOKEN, token))


def concept_prompt(k: int) -> PromptSpec:
    return literal_prompt(concept_token(k))


def placeholder_prompt(embedding: Union[Tensor, np.ndarray]) -> PromptSpec:
    """[NEUTRAL, S*] with v bound at the placeholder."""
    if not isinstance(embedding, Tensor):
        embedding = Tensor(embedding)
    return PromptSpec((NEUTRAL_TOKEN, PLACEHOLDER_TOKEN), placeholder_slot=1, bound_embedding=embedding)
