"""
Visualization utilities for restoration experiment reports.
"""

from utils.visualization.comparison_plots import ReportVisualizer

__all__ = ['ReportVisualizer']
