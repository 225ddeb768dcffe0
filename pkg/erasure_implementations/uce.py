"""Closed-form editing of the key/value projections (UCE analogue)."""

import logging
from typing import Dict, Sequence, Tuple

import numpy as np

from utils.autodiff.tensor import no_grad
from utils.conditioning.encoder import encode_tokens
from utils.conditioning.model import DenoiserModel
from utils.conditioning.prompts import PromptSpec
from utils.conditioning.world import NEUTRAL_TOKEN, ConceptWorld, concept_token
from erasure_implementations.types import ErasureSpec, UnlearnedModel

logger = logging.getLogger(__name__)

UCE_PARAMETERS = ("attention.W_key", "attention.W_value")


class SingularSystemError(np.linalg.LinAlgError):
    """Raised when the UCE normal matrix cannot be inverted."""


def token_encoding(model: DenoiserModel, token: str) -> np.ndarray:
    """Conditioning vector the encoder produces for a single token."""
    with no_grad():
        return encode_tokens(model, PromptSpec((token,))).data[0].copy()


def default_preservation_tokens(world: ConceptWorld, target: int) -> Tuple[str, ...]:
    return tuple(concept_token(k) for k in range(world.n_concepts) if k != target) + (NEUTRAL_TOKEN,)


def normal_equations(
    w_old: np.ndarray,
    edits: Sequence[Tuple[np.ndarray, np.ndarray]],
    preserved: Sequence[np.ndarray],
    ridge: float,
) -> Tuple[np.ndarray, np.ndarray]:
    """
    Assemble W M = N for the edit, with
    M = sum c c^T + sum c_p c_p^T + ridge I and
    N = sum v* c^T + sum W_old c_p c_p^T + ridge W_old.
    """
    dim = w_old.shape[1]
    lhs = ridge * np.eye(dim)
    rhs = ridge * w_old
    for c, v_star in edits:
        lhs = lhs + np.outer(c, c)
        rhs = rhs + np.outer(v_star, c)
    for c_p in preserved:
        lhs = lhs + np.outer(c_p, c_p)
        rhs = rhs + np.outer(w_old @ c_p, c_p)
    return lhs, rhs


def solve_projection(lhs: np.ndarray, rhs: np.ndarray) -> np.ndarray:
    """
    Solve W lhs = rhs for W.

    Raises:
        SingularSystemError: If lhs is singular or numerically close to it
    """
    rank = np.linalg.matrix_rank(lhs)
    if rank < lhs.shape[0]:
        raise SingularSystemError(
            f"UCE normal matrix is singular (rank {rank} of {lhs.shape[0]}); "
            "add a ridge term (ErasureSpec.ridge > 0)"
        )
    # lhs is symmetric, so W = rhs lhs^-1 = (lhs^-1 rhs^T)^T
    return np.linalg.solve(lhs, rhs.T).T


def minimum_change_edit(w_old: np.ndarray, edits: Sequence[Tuple[np.ndarray, np.ndarray]]) -> np.ndarray:
    """
    Smallest change to w_old (Frobenius norm) that maps every edited c onto its
    v* exactly. This is the zero-ridge limit of the normal equations when there
    is nothing to preserve; directions orthogonal to the edited c keep w_old.
    """
    if not edits:
        return w_old.copy()
    sources = np.stack([c for c, _ in edits])
    residual = np.stack([v_star for _, v_star in edits]) - sources @ w_old.T
    delta, _, _, _ = np.linalg.lstsq(sources, residual, rcond=None)
    return w_old + delta.T


def edit_uce(
    base: DenoiserModel,
    spec: ErasureSpec,
    world: ConceptWorld,
    verbose: bool = False,
) -> UnlearnedModel:
    """
    Replace W_key and W_value with the least-squares solution that maps the
    target token's encoding to what the neutral token produced, while keeping
    the outputs for the preservation set. No gradient steps; seed-free.

    Args:
        base: Model to edit (not mutated)
        spec: UCE spec; `preserve_tokens` overrides the default set and
            `edit_target=False` gives a preservation-only edit. An empty
            preservation set takes the exact minimum-change edit and
            ignores `ridge`
        world: Concept world defining the default preservation set

    Returns:
        UnlearnedModel with edited key/value projections

    Raises:
        SingularSystemError: If the normal matrix is singular
    """
    if spec.method != "uce":
        raise ValueError(f"edit_uce called with method '{spec.method}'")
    world.check_concept(spec.target)
    base_checksum = base.checksum()
    model = base.copy()

    target_encoding = token_encoding(base, concept_token(spec.target))
    neutral_encoding = token_encoding(base, NEUTRAL_TOKEN)
    tokens = spec.preserve_tokens if spec.preserve_tokens is not None else default_preservation_tokens(world, spec.target)
    preserved = [token_encoding(base, token) for token in tokens]

    residuals: Dict[str, float] = {}
    for name in UCE_PARAMETERS:
        w_old = base[name].data
        edits = [(target_encoding, w_old @ neutral_encoding)] if spec.edit_target else []
        if not preserved:
            w_new = minimum_change_edit(w_old, edits)
            residuals[name] = max((float(np.linalg.norm(w_new @ c - v)) for c, v in edits), default=0.0)
            model[name].data = w_new
            continue
        lhs, rhs = normal_equations(w_old, edits, preserved, spec.ridge)
        try:
            w_new = solve_projection(lhs, rhs)
        except SingularSystemError as e:
            logger.error(f"UCE edit of {name} for {spec.label} failed: {e}")
            raise
        residuals[name] = float(np.linalg.norm(w_new @ lhs - rhs))
        model[name].data = w_new

    if verbose:
        logger.info(f"UCE edited {', '.join(UCE_PARAMETERS)} for {spec.label}; residuals {residuals}")
    return UnlearnedModel(model=model, spec=spec, base_checksum=base_checksum, seed=0)
