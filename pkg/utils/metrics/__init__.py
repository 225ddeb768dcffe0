"""
Metrics for restoration experiments: concept classifier, restoration scores,
transfer matrices, embedding atlas and ablation traces.
"""

from utils.metrics.classifier import (
    ACCURACY_GATE,
    ClassifierConfig,
    ClassifierGateError,
    ClassifierReport,
    ConceptClassifier,
    train_classifier,
)
from utils.metrics.restoration import (
    NeutralPreservation,
    RestorationScore,
    attack_prompt,
    generate,
    neutral_histogram,
    neutral_preservation,
    restoration_accuracy,
    restoration_scores,
    total_variation,
)
from utils.metrics.transfer import AttackInput, TransferMatrix, build_transfer_matrix, cell_stream
from utils.metrics.atlas import AtlasReport, DegenerateProjectionError, embedding_atlas
from utils.metrics.ablation import AblationReport, AblationTrace, ablation_trace, record_epochs

__all__ = [
    'ACCURACY_GATE',
    'ClassifierConfig',
    'ClassifierGateError',
    'ClassifierReport',
    'ConceptClassifier',
    'train_classifier',
    'NeutralPreservation',
    'RestorationScore',
    'attack_prompt',
    'generate',
    'neutral_histogram',
    'neutral_preservation',
    'restoration_accuracy',
    'restoration_scores',
    'total_variation',
    'AttackInput',
    'TransferMatrix',
    'build_transfer_matrix',
    'cell_stream',
    'AtlasReport',
    'DegenerateProjectionError',
    'embedding_atlas',
    'AblationReport',
    'AblationTrace',
    'ablation_trace',
    'record_epochs',
]
