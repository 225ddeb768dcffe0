"""
Token vocabulary, prompts with the placeholder S*, the toy text encoder and the
cross-attention conditioned denoiser.
"""

from utils.conditioning.world import (
    ConceptWorld,
    WorldConfig,
    NEUTRAL_TOKEN,
    PLACEHOLDER_TOKEN,
    concept_token,
)
from utils.conditioning.prompts import PromptSpec, neutral_prompt, literal_prompt, concept_prompt, placeholder_prompt
from utils.conditioning.model import DenoiserConfig, DenoiserModel, PARAMETER_GROUPS
from utils.conditioning.encoder import encode_tokens, token_embeddings, UnboundPlaceholderError
from utils.conditioning.attention import ConditioningOutput, cross_attention
from utils.conditioning.denoiser import denoiser_forward, timestep_embedding

__all__ = [
    'ConceptWorld',
    'WorldConfig',
    'NEUTRAL_TOKEN',
    'PLACEHOLDER_TOKEN',
    'concept_token',
    'PromptSpec',
    'neutral_prompt',
    'literal_prompt',
    'concept_prompt',
    'placeholder_prompt',
    'DenoiserConfig',
    'DenoiserModel',
    'PARAMETER_GROUPS',
    'encode_tokens',
    'token_embeddings',
    'UnboundPlaceholderError',
    'ConditioningOutput',
    'cross_attention',
    'denoiser_forward',
    'timestep_embedding',
]
