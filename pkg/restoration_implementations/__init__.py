"""
Restoration attacks: textual inversion and the transferable adversarial
embedding search, plus candidate selection.
"""

from restoration_implementations.config import ASConfig, INNER_LOSSES, V0_POLICIES
from restoration_implementations.candidates import CandidateEntry, CandidateSet
from restoration_implementations.textual_inversion import initial_embedding, textual_inversion
from restoration_implementations.adversarial_search import (
    AdversarialSearch,
    PhaseRecord,
    ReferenceDivergence,
    RelaxationWitness,
    adversarial_search,
    erase_step_loss,
)
from restoration_implementations.selection import SELECTION_MODES, CandidateChoice, final_window, select_candidate

__all__ = [
    'ASConfig',
    'INNER_LOSSES',
    'V0_POLICIES',
    'CandidateEntry',
    'CandidateSet',
    'initial_embedding',
    'textual_inversion',
    'AdversarialSearch',
    'PhaseRecord',
    'ReferenceDivergence',
    'RelaxationWitness',
    'adversarial_search',
    'erase_step_loss',
    'SELECTION_MODES',
    'CandidateChoice',
    'final_window',
    'select_candidate',
]
