"""
Run concept-restoration experiments from the command line.

This script:
1. Loads the JSON experiment config (defaults when --config is omitted)
2. Runs the requested stage and everything it depends on
3. Skips stages whose inputs are unchanged unless --no-resume is given

Example:
    python development/scripts/run_experiment.py run --config configs/smoke.json --out results/smoke
"""

import sys
from pathlib import Path

# Add project root to path
project_root = Path(__file__).parent.parent.parent
sys.path.append(str(project_root))

from evaluation_pipelines.cli import main

if __name__ == '__main__':
    sys.exit(main())
