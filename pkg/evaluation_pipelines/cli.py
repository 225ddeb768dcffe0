"""
Command-line front end.

    run_experiment.py run --config configs/default.json --out results/run-0
    run_experiment.py attack-as --config configs/default.json --seed 3
    run_experiment.py inspect results/run-0/checkpoints/base.ckpt
"""

import argparse
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path
from typing import List, Optional, Sequence

from utils.persistence.checkpoint import CheckpointError, read_checkpoint
from evaluation_pipelines.config import ConfigError, ExperimentConfig
from evaluation_pipelines.runner import PipelineRunner, StageError

logger = logging.getLogger(__name__)

STAGE_COMMANDS = {
    "train-base": ["train-base"],
    "erase": ["erase"],
    "attack-ti": ["attack-ti"],
    "attack-as": ["attack-as"],
    "evaluate": ["evaluate"],
    "atlas": ["atlas"],
    "ablate": ["ablate"],
    "run": None,
}

LOG_FILE = "run.log"


def configure_logging(output_dir: Optional[Path], verbose: bool = False) -> List[logging.Handler]:
    """
    Console handler with plain messages; timestamps go only to <out>/run.log.

    Returns:
        The installed handlers, for removal once the command finishes
    """
    root = logging.getLogger()
    root.setLevel(logging.INFO)
    console = logging.StreamHandler(sys.stderr)
    console.setLevel(logging.INFO if verbose else logging.WARNING)
    console.setFormatter(logging.Formatter("%(message)s"))
    handlers: List[logging.Handler] = [console]
    if output_dir is not None:
        output_dir.mkdir(parents=True, exist_ok=True)
        sidecar = logging.FileHandler(output_dir / LOG_FILE, encoding="utf-8")
        sidecar.setLevel(logging.INFO)
        sidecar.setFormatter(logging.Formatter("%(asctime)s %(levelname)s %(name)s: %(message)s"))
        handlers.append(sidecar)
    for handler in handlers:
        root.addHandler(handler)
    return handlers


def _add_common_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument('--config', type=Path, help='JSON experiment config (defaults when omitted)')
    parser.add_argument('--seed', type=int, help='Override the master seed')
    parser.add_argument('--out', type=Path, help='Override the output directory')
    parser.add_argument('--workers', type=int, help='Worker processes for evaluation cells')
    parser.add_argument('--resume', action=argparse.BooleanOptionalAction, default=True,
                        help='Skip stages whose inputs are unchanged (default: on)')
    parser.add_argument('--verbose', action='store_true', help='Log progress to the console')


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog='run_experiment',
        description='Concept-restoration experiments on toy concept-erased diffusion models',
    )
    subparsers = parser.add_subparsers(dest='command', required=True)
    helps = {
        "train-base": "Train the base denoiser",
        "erase": "Run every configured erasure",
        "attack-ti": "Textual-inversion baselines on the base and unlearned models",
        "attack-as": "Adversarial search on the base model and its neutral-preservation check",
        "evaluate": "Select candidates and build the transfer matrix",
        "atlas": "Embedding atlas of TI and AS embeddings",
        "ablate": "Ablation traces with and without surrogate updates",
        "run": "Full pipeline",
    }
    for command, text in helps.items():
        _add_common_flags(subparsers.add_parser(command, help=text))
    inspect = subparsers.add_parser('inspect', help='Print checkpoint metadata')
    inspect.add_argument('path', type=Path, help='Checkpoint file')
    return parser


def load_config(args: argparse.Namespace) -> ExperimentConfig:
    """Config file (or defaults) with CLI overrides applied."""
    config = ExperimentConfig.from_json(args.config) if args.config else ExperimentConfig()
    overrides = {}
    if args.seed is not None:
        overrides["seed"] = args.seed
    if args.out is not None:
        overrides["output_dir"] = str(args.out)
    if args.workers is not None:
        overrides["workers"] = args.workers
    if not overrides:
        return config
    try:
        return replace(config, **overrides)
    except ValueError as e:
        raise ConfigError(f"Invalid override: {e}") from e


def inspect_checkpoint(path: Path) -> int:
    try:
        checkpoint = read_checkpoint(path)
    except (CheckpointError, OSError) as e:
        print(f"Cannot read checkpoint {path}: {e}", file=sys.stderr)
        return 1
    print(json.dumps(checkpoint.summary(), indent=2, sort_keys=True))
    return 0


def main(argv: Optional[Sequence[str]] = None) -> int:
    """
    Parse arguments and run the command.

    Returns:
        Exit status: 0 on success, 1 on configuration or stage failure
    """
    args = build_parser().parse_args(argv)
    if args.command == 'inspect':
        return inspect_checkpoint(args.path)

    handlers = configure_logging(None, args.verbose)
    try:
        try:
            config = load_config(args)
        except (ConfigError, OSError) as e:
            logger.error(f"Configuration error: {e}")
            return 1
        out = Path(config.output_dir)
        for handler in handlers:
            logging.getLogger().removeHandler(handler)
        handlers = configure_logging(out, args.verbose)

        runner = PipelineRunner(config, output_dir=out, resume=args.resume, verbose=args.verbose)
        try:
            runner.run(STAGE_COMMANDS[args.command])
        except StageError as e:
            logger.error(str(e))
            return 1
        logger.info(f"Done: ran {runner.executed}, skipped {runner.skipped}")
        return 0
    finally:
        for handler in handlers:
            logging.getLogger().removeHandler(handler)
            handler.close()


if __name__ == '__main__':
    sys.exit(main())
