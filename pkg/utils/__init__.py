"""
Shared utilities for the concept-restoration testbed: autodiff substrate,
diffusion core, conditioning, metrics, visualization and checkpoint persistence.

Subpackages are imported explicitly by callers, e.g.
`from utils.diffusion import build_schedule`.
"""

__all__ = [
    'autodiff',
    'diffusion',
    'conditioning',
    'metrics',
    'visualization',
    'persistence',
]
