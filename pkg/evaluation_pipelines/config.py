"""
Experiment configuration: one JSON document composed of per-concern sections.
"""

import hashlib
import json
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple, Union

from utils.conditioning.model import DenoiserConfig
from utils.conditioning.world import WorldConfig
from utils.diffusion.schedule import ScheduleConfig
from utils.diffusion.training import TrainingConfig
from utils.metrics.classifier import ClassifierConfig
from erasure_implementations.types import ERASURE_METHODS, ErasureSpec
from restoration_implementations.config import ASConfig, V0_POLICIES
from restoration_implementations.selection import SELECTION_MODES

REPORT_FORMATS = ("csv", "json", "svg")
# excluded from the config hash: they never change any artifact
UNHASHED_KEYS = ("output_dir", "workers")


class ConfigError(ValueError):
    """Configuration parse or validation error, with source position when known."""

    def __init__(self, message: str, line: Optional[int] = None, column: Optional[int] = None):
        location = f" (line {line}, column {column})" if line is not None else ""
        super().__init__(f"{message}{location}")
        self.line = line
        self.column = column


@dataclass
class TextualInversionConfig:
    """Budget of the textual-inversion baselines."""
    iters: int = 3000
    lr: float = 0.1
    wd: float = 0.1
    batch_size: int = 16
    v0_policy: str = "table_mean"

    def __post_init__(self):
        """Validate configuration after initialization."""
        if self.iters < 0:
            raise ValueError(f"iters must be non-negative, got {self.iters}")
        if self.lr <= 0 or self.wd < 0:
            raise ValueError("lr must be positive and wd non-negative")
        if self.batch_size < 1:
            raise ValueError(f"batch_size must be at least 1, got {self.batch_size}")
        if self.v0_policy not in V0_POLICIES:
            raise ValueError(f"Unknown v0_policy '{self.v0_policy}', expected one of {V0_POLICIES}")


@dataclass
class EvaluationConfig:
    """
    Evaluation budgets.

    Attributes:
        n: Samples per transfer-matrix cell
        stride: DDIM stride
        sampler: "ddim" or "ddpm"
        selection_modes: Candidate-selection modes producing AS rows
        selection_n: Samples per (candidate, model) pair during best_of_V
        selection_subsample: Candidates scored during best_of_V (None = all)
        record_every: Ablation recording interval in epochs
        ablation_n: Samples per ablation record and model
        atlas_ti_runs: Textual-inversion runs per source model for the atlas
        atlas_ti_iters: Iterations of each atlas textual-inversion run
        neutral_n: Neutral-prompt samples per model for the search's
            neutral-preservation check
        formats: Report formats to emit
    """
    n: int = 500
    stride: int = 5
    sampler: str = "ddim"
    selection_modes: Tuple[str, ...] = ("final_loss", "best_of_V")
    selection_n: int = 100
    selection_subsample: Optional[int] = 60
    record_every: int = 25
    ablation_n: int = 100
    atlas_ti_runs: int = 4
    atlas_ti_iters: int = 500
    neutral_n: int = 1000
    formats: Tuple[str, ...] = REPORT_FORMATS

    def __post_init__(self):
        """Validate configuration after initialization."""
        self.selection_modes = tuple(self.selection_modes)
        self.formats = tuple(self.formats)
        for name in ("n", "stride", "selection_n", "record_every", "ablation_n", "atlas_ti_runs", "neutral_n"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be at least 1, got {getattr(self, name)}")
        if self.atlas_ti_iters < 0:
            raise ValueError(f"atlas_ti_iters must be non-negative, got {self.atlas_ti_iters}")
        if self.sampler not in ("ddim", "ddpm"):
            raise ValueError(f"Unknown sampler '{self.sampler}'")
        for mode in self.selection_modes:
            if mode not in SELECTION_MODES:
                raise ValueError(f"Unknown selection mode '{mode}', expected one of {SELECTION_MODES}")
        for fmt in self.formats:
            if fmt not in REPORT_FORMATS:
                raise ValueError(f"Unknown report format '{fmt}', expected one of {REPORT_FORMATS}")
        if self.selection_subsample is not None and self.selection_subsample < 1:
            raise ValueError(f"selection_subsample must be at least 1, got {self.selection_subsample}")


_SECTIONS = {
    "world": WorldConfig,
    "schedule": ScheduleConfig,
    "model": DenoiserConfig,
    "training": TrainingConfig,
    "classifier": ClassifierConfig,
    "textual_inversion": TextualInversionConfig,
    "attack": ASConfig,
    "evaluation": EvaluationConfig,
}


def default_erasures(target: int) -> List[ErasureSpec]:
    """All four methods at their default budgets."""
    return [ErasureSpec(method, target) for method in ERASURE_METHODS]


@dataclass
class ExperimentConfig:
    """
    Every parameter of a pipeline run.

    Example usage:
        >>> config = ExperimentConfig.from_json("configs/default.json")
        >>> config.config_hash()
    """
    target: int = 0
    seed: int = 0
    output_dir: str = "results"
    workers: int = 1
    world: WorldConfig = field(default_factory=WorldConfig)
    schedule: ScheduleConfig = field(default_factory=ScheduleConfig)
    model: DenoiserConfig = field(default_factory=DenoiserConfig)
    training: TrainingConfig = field(default_factory=TrainingConfig)
    classifier: ClassifierConfig = field(default_factory=ClassifierConfig)
    erasures: Optional[List[ErasureSpec]] = None
    textual_inversion: TextualInversionConfig = field(default_factory=TextualInversionConfig)
    attack: ASConfig = field(default_factory=ASConfig)
    evaluation: EvaluationConfig = field(default_factory=EvaluationConfig)

    def __post_init__(self):
        """Fill the default erasures and validate."""
        if self.erasures is None:
            self.erasures = default_erasures(self.target)
        if not 0 <= self.target < self.world.n_concepts:
            raise ValueError(f"target must be a concept id below {self.world.n_concepts}, got {self.target}")
        if self.seed < 0:
            raise ValueError(f"seed must be non-negative, got {self.seed}")
        if self.workers < 1:
            raise ValueError(f"workers must be at least 1, got {self.workers}")
        labels = [spec.label for spec in self.erasures]
        if len(set(labels)) != len(labels):
            raise ValueError(f"Duplicate erasure specs: {labels}")
        for spec in self.erasures:
            if spec.target != self.target:
                raise ValueError(f"Erasure '{spec.label}' targets c{spec.target}, the experiment targets c{self.target}")
        if (self.schedule.T % self.evaluation.stride) != 0:
            raise ValueError(f"evaluation.stride {self.evaluation.stride} must divide schedule.T {self.schedule.T}")

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "ExperimentConfig":
        """
        Build from a parsed document; missing keys take defaults.

        Raises:
            ConfigError: Unknown keys or invalid values
        """
        if not isinstance(data, dict):
            raise ConfigError("The configuration must be a JSON object")
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(data) - known)
        if unknown:
            raise ConfigError(f"Unknown configuration keys: {unknown}")
        try:
            kwargs: Dict[str, Any] = {}
            for key, value in data.items():
                if key in _SECTIONS:
                    kwargs[key] = _build_section(key, _SECTIONS[key], value)
                elif key == "erasures":
                    target = data.get("target", 0)
                    kwargs[key] = [ErasureSpec.from_dict({"target": target, **_as_object(f"erasures[{i}]", spec)})
                                   for i, spec in enumerate(value)]
                else:
                    kwargs[key] = value
            return cls(**kwargs)
        except ConfigError:
            raise
        except (TypeError, ValueError) as e:
            raise ConfigError(f"Invalid configuration: {e}") from e

    @classmethod
    def from_json(cls, path: Union[str, Path]) -> "ExperimentConfig":
        """
        Parse a JSON config file.

        Raises:
            ConfigError: Syntax errors (with line and column) or invalid content
        """
        text = Path(path).read_text(encoding="utf-8")
        try:
            data = json.loads(text)
        except json.JSONDecodeError as e:
            raise ConfigError(f"Malformed JSON in {path}: {e.msg}", line=e.lineno, column=e.colno) from e
        return cls.from_dict(data)

    def to_dict(self) -> Dict[str, Any]:
        """Fully materialized configuration (every default written out)."""
        data: Dict[str, Any] = {
            "target": self.target,
            "seed": self.seed,
            "output_dir": self.output_dir,
            "workers": self.workers,
            "erasures": [spec.to_dict() for spec in self.erasures],
        }
        for key in _SECTIONS:
            section = asdict(getattr(self, key))
            data[key] = {k: list(v) if isinstance(v, tuple) else v for k, v in section.items()}
        return data

    def section_hash(self, *keys: str) -> str:
        """Canonical-JSON SHA-256 over the named top-level keys."""
        data = self.to_dict()
        subset = {key: data[key] for key in keys}
        return canonical_hash(subset)

    def config_hash(self) -> str:
        data = self.to_dict()
        for key in UNHASHED_KEYS:
            data.pop(key)
        return canonical_hash(data)

    def seed_for(self, *key: Any) -> int:
        """Non-negative 32-bit seed derived from the master seed and a key path."""
        text = ":".join([str(self.seed)] + [str(k) for k in key])
        return int.from_bytes(hashlib.sha256(text.encode("utf-8")).digest()[:4], "little")

    def write_effective(self, path: Union[str, Path]) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(canonical_json(self.to_dict(), indent=2), encoding="utf-8")
        return path


def _as_object(name: str, value: Any) -> Dict[str, Any]:
    if not isinstance(value, dict):
        raise ConfigError(f"Section '{name}' must be a JSON object, got {type(value).__name__}")
    return value


def _build_section(name: str, cls, value: Any):
    value = _as_object(name, value)
    known = {f.name for f in fields(cls)}
    unknown = sorted(set(value) - known)
    if unknown:
        raise ConfigError(f"Unknown keys in section '{name}': {unknown}")
    return cls(**value)


def canonical_json(data: Any, indent: Optional[int] = None) -> str:
    text = json.dumps(data, sort_keys=True, indent=indent, separators=(",", ": ") if indent else (",", ":"))
    return text + "\n" if indent else text


def canonical_hash(data: Any) -> str:
    return hashlib.sha256(canonical_json(data).encode("utf-8")).hexdigest()
