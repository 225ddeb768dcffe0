"""
Setup script to make the project packages importable from anywhere.
Run this at the start of your notebooks (the test suite imports it too):

import utils_setup
"""

import sys
from pathlib import Path

# Add project root to Python path
project_root = Path(__file__).parent.absolute()
if str(project_root) not in sys.path:
    sys.path.insert(0, str(project_root))

# Import commonly used utilities
from utils.autodiff.rng import RandomStream
from utils.conditioning.world import ConceptWorld, WorldConfig
from utils.visualization.comparison_plots import ReportVisualizer
from evaluation_pipelines.config import ExperimentConfig
from evaluation_pipelines.runner import run_pipeline

# Make utilities available at module level
__all__ = [
    'RandomStream',
    'ConceptWorld',
    'WorldConfig',
    'ReportVisualizer',
    'ExperimentConfig',
    'run_pipeline',
]
