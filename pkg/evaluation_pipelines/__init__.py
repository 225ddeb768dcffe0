"""
Experiment pipelines: configuration, stage orchestration, reports and the CLI.
"""

from evaluation_pipelines.config import (
    ConfigError,
    EvaluationConfig,
    ExperimentConfig,
    TextualInversionConfig,
    canonical_hash,
    default_erasures,
)
from evaluation_pipelines.reports import emit_report, read_matrix_csv
from evaluation_pipelines.runner import STAGES, PipelineRunner, StageError, required_stages, run_pipeline

__all__ = [
    'ConfigError',
    'EvaluationConfig',
    'ExperimentConfig',
    'TextualInversionConfig',
    'canonical_hash',
    'default_erasures',
    'emit_report',
    'read_matrix_csv',
    'STAGES',
    'PipelineRunner',
    'StageError',
    'required_stages',
    'run_pipeline',
]
