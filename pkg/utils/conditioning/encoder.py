"""Toy text encoder: table lookup (or the bound v) through a shared two-layer MLP."""

from typing import List

from utils.autodiff import functional as F
from utils.autodiff.tensor import ShapeError, Tensor
from utils.conditioning.model import DenoiserModel
from utils.conditioning.prompts import PromptSpec
from utils.conditioning.world import PLACEHOLDER_TOKEN


class UnboundPlaceholderError(ValueError):
    """Raised when S* appears in a prompt without a bound embedding."""


def token_embeddings(model: DenoiserModel, prompt: PromptSpec) -> Tensor:
    """Stack the per-position input embeddings of a prompt into an [L x embed_dim] matrix."""
    table = model["encoder.token_table"]
    embed_dim = table.shape[1]
    rows: List[Tensor] = []
    for position, token in enumerate(prompt.tokens):
        if position == prompt.placeholder_slot:
            v = prompt.bound_embedding
            if v.size != embed_dim:
                raise ShapeError(
                    f"Bound embedding has shape {v.shape}, expected ({embed_dim},) for the placeholder"
                )
            rows.append(v if v.shape == (1, embed_dim) else F.reshape(v, (1, embed_dim)))
            continue
        if token == PLACEHOLDER_TOKEN:
            raise UnboundPlaceholderError(f"Placeholder {PLACEHOLDER_TOKEN} at position {position} has no bound embedding")
        rows.append(F.take_rows(table, [model.token_index(token)]))
    return F.concat_rows(rows)


def encode_tokens(model: DenoiserModel, prompt: PromptSpec) -> Tensor:
    """
    T_text: per-token embedding lookup (v at the placeholder slot) passed
    through the shared encoder silu(E W_1 + b_1) W_2 + b_2.

    Args:
        model: Model owning the token table and encoder weights
        prompt: Prompt to encode

    Returns:
        Conditioning sequence [tokens x cond_dim]

    Raises:
        KeyError: If a token is not in the vocabulary
        UnboundPlaceholderError: If S* is present without a bound embedding
    """
    embeddings = token_embeddings(model, prompt)
    hidden = F.silu(F.linear(embeddings, model["encoder.W_1"], model["encoder.b_1"]))
    return F.linear(hidden, model["encoder.W_2"], model["encoder.b_2"])
