"""Single-head cross-attention that injects the conditioning sequence into the trunk."""

from dataclasses import dataclass
from typing import Mapping, Tuple

import numpy as np

from utils.autodiff import functional as F
from utils.autodiff.tensor import ShapeError, Tensor


@dataclass
class ConditioningOutput:
    """Context and attention map captured during the last denoiser forward pass."""
    context: Tensor
    attention_map: Tensor

    def slot_attention(self, position: int) -> np.ndarray:
        """Attention mass each query puts on one token position."""
        return self.attention_map.data[:, position].copy()


def cross_attention(
    hidden: Tensor,
    context: Tensor,
    params: Mapping[str, Tensor],
) -> Tuple[Tensor, Tensor]:
    """
    Attend from trunk activations over the token positions of the context.

    Keys and values are k_j = W_key c_j and u_j = W_value c_j; the attended
    values are projected back by W_out and added residually to `hidden`.

    Args:
        hidden: Trunk activations [batch x hidden_dim]
        context: Conditioning sequence [tokens x cond_dim]
        params: Mapping holding attention.W_query/W_key/W_value/W_out

    Returns:
        (output [batch x hidden_dim], attention map [batch x tokens])
    """
    w_query = params["attention.W_query"]
    w_key = params["attention.W_key"]
    w_value = params["attention.W_value"]
    w_out = params["attention.W_out"]
    if context.data.ndim != 2 or context.shape[0] == 0:
        raise ShapeError(f"cross_attention: context must be a non-empty matrix, got {context.shape}")
    if hidden.shape[1] != w_query.shape[0]:
        raise ShapeError(f"cross_attention: hidden {hidden.shape} does not match W_query {w_query.shape}")
    if context.shape[1] != w_key.shape[1]:
        raise ShapeError(f"cross_attention: context {context.shape} does not match W_key {w_key.shape}")

    queries = F.matmul(hidden, w_query)
    keys = F.matmul(context, F.transpose(w_key))
    values = F.matmul(context, F.transpose(w_value))
    scale = 1.0 / np.sqrt(w_query.shape[1])
    scores = F.mul(F.matmul(queries, F.transpose(keys)), scale)
    attention = F.softmax_rows(scores)
    attended = F.matmul(F.matmul(attention, values), w_out)
    return F.add(hidden, attended), attention
