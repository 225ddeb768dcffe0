"""
Pipeline orchestration: train base -> train classifier -> erasures -> attacks
-> candidate selection -> transfer matrix -> atlas -> ablation.

Every stage writes its outputs plus a record under `stages/` holding the hash
of its inputs (config sections and parent file hashes) and the hashes of the
files it produced. With resume enabled, a stage whose record matches is
skipped and its outputs are loaded from disk.
"""

import hashlib
import json
import logging
from pathlib import Path
from typing import Any, Callable, Dict, Iterable, List, Optional, Sequence, Union

import numpy as np

from utils.autodiff.optim import OptimizerState
from utils.autodiff.rng import RandomStream
from utils.conditioning.model import DenoiserModel
from utils.conditioning.world import ConceptWorld, concept_token
from utils.diffusion.schedule import schedule_from_config
from utils.diffusion.training import train_denoiser
from utils.metrics.ablation import ablation_trace
from utils.metrics.atlas import embedding_atlas
from utils.metrics.classifier import train_classifier
from utils.metrics.restoration import neutral_preservation
from utils.metrics.transfer import AttackInput, BASE_LABEL, build_transfer_matrix
from utils.persistence.checkpoint import checkpoint_id, load_checkpoint, save_checkpoint
from erasure_implementations import erase
from restoration_implementations.adversarial_search import AdversarialSearch
from restoration_implementations.selection import select_candidate
from restoration_implementations.textual_inversion import textual_inversion
from evaluation_pipelines.config import ExperimentConfig, canonical_hash, canonical_json
from evaluation_pipelines.reports import emit_report

logger = logging.getLogger(__name__)

STAGES = (
    "train-base",
    "train-classifier",
    "erase",
    "attack-ti",
    "attack-as",
    "select",
    "evaluate",
    "atlas",
    "ablate",
)

DEPENDENCIES = {
    "train-base": (),
    "train-classifier": (),
    "erase": ("train-base",),
    "attack-ti": ("train-base", "erase"),
    "attack-as": ("train-base", "train-classifier"),
    "select": ("train-base", "train-classifier", "erase", "attack-as"),
    "evaluate": ("train-base", "train-classifier", "erase", "attack-ti", "select"),
    "atlas": ("train-base", "erase", "attack-as"),
    "ablate": ("train-base", "train-classifier", "erase"),
}

BASE_PATH = "checkpoints/base.ckpt"
CLASSIFIER_PATH = "checkpoints/classifier.ckpt"
TI_PATH = "checkpoints/textual_inversion.ckpt"
CANDIDATES_PATH = "checkpoints/candidates.ckpt"
SELECTION_PATH = "checkpoints/selection.ckpt"
SELECTION_SUMMARY_PATH = "reports/selection/selection.json"
NEUTRAL_REPORT_PATH = "reports/search/neutral_preservation.json"
NEUTRAL_TV_BOUND = 0.2
EFFECTIVE_CONFIG = "config.effective.json"


class StageError(RuntimeError):
    """Raised when a pipeline stage fails; names the stage."""

    def __init__(self, stage: str, cause: BaseException):
        super().__init__(f"Stage '{stage}' failed: {type(cause).__name__}: {cause}")
        self.stage = stage


def file_hash(path: Union[str, Path]) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 16), b""):
            digest.update(chunk)
    return digest.hexdigest()


def required_stages(targets: Optional[Iterable[str]] = None) -> List[str]:
    """Targets plus their transitive dependencies, in pipeline order."""
    wanted = set()
    pending = list(targets or STAGES)
    while pending:
        stage = pending.pop()
        if stage not in DEPENDENCIES:
            raise ValueError(f"Unknown stage '{stage}', expected one of {STAGES}")
        if stage not in wanted:
            wanted.add(stage)
            pending.extend(DEPENDENCIES[stage])
    return [stage for stage in STAGES if stage in wanted]


class PipelineRunner:
    """
    Runs the experiment stages against one output directory.

    Args:
        config: Experiment configuration
        output_dir: Overrides config.output_dir
        resume: Skip stages whose input hash and outputs match their record
        verbose: Whether to log progress
    """

    def __init__(
        self,
        config: ExperimentConfig,
        output_dir: Optional[Union[str, Path]] = None,
        resume: bool = True,
        verbose: bool = False,
    ):
        self.config = config
        self.out = Path(output_dir or config.output_dir)
        self.resume = resume
        self.verbose = verbose
        self.config_hash = config.config_hash()
        self.world = ConceptWorld.build(config.world, RandomStream(config.seed_for("world")))
        self.schedule = schedule_from_config(config.schedule)
        self.executed: List[str] = []
        self.skipped: List[str] = []
        self._cache: Dict[str, Any] = {}

    def _log(self, message: str) -> None:
        """Log message if verbose mode is enabled."""
        if self.verbose:
            logger.info(message)

    # ---- paths and records ----

    def path(self, relative: str) -> Path:
        return self.out / relative

    @staticmethod
    def erasure_path(label: str) -> str:
        return f"checkpoints/erasure/{label}.ckpt"

    def _record_path(self, stage: str) -> Path:
        return self.out / "stages" / f"{stage}.json"

    def _input_hash(self, stage: str, sections: Sequence[str], parents: Sequence[str], extra: Any = None) -> str:
        config = self.config.to_dict()
        return canonical_hash(
            {
                "stage": stage,
                "config": {key: config[key] for key in sections},
                "parents": {relative: file_hash(self.path(relative)) for relative in parents},
                "extra": extra,
            }
        )

    def _is_complete(self, stage: str, input_hash: str) -> bool:
        record_path = self._record_path(stage)
        if not record_path.exists():
            return False
        record = json.loads(record_path.read_text(encoding="utf-8"))
        if record.get("input_hash") != input_hash:
            return False
        for relative, digest in record.get("outputs", {}).items():
            path = self.path(relative)
            if not path.exists() or file_hash(path) != digest:
                return False
        return True

    def _provenance(self, stage: str, parents: Sequence[str], seed: Optional[int] = None) -> Dict[str, Any]:
        return {
            "config_hash": self.config_hash,
            "stage": stage,
            "seed": seed,
            "parents": {relative: checkpoint_id(self.path(relative)) for relative in parents
                        if relative.endswith(".ckpt")},
        }

    def _stage(
        self,
        stage: str,
        sections: Sequence[str],
        parents: Sequence[str],
        compute: Callable[[], List[Path]],
        extra: Any = None,
    ) -> None:
        input_hash = self._input_hash(stage, sections, parents, extra)
        if self.resume and self._is_complete(stage, input_hash):
            self._log(f"Skipping stage '{stage}' (inputs unchanged)")
            self.skipped.append(stage)
            return
        self._log(f"Running stage '{stage}'")
        try:
            written = compute()
        except Exception as e:
            logger.error(f"Stage '{stage}' failed: {e}")
            raise StageError(stage, e) from e
        record = {
            "stage": stage,
            "input_hash": input_hash,
            "outputs": {
                path.relative_to(self.out).as_posix(): file_hash(path) for path in sorted(written)
            },
        }
        record_path = self._record_path(stage)
        record_path.parent.mkdir(parents=True, exist_ok=True)
        record_path.write_text(canonical_json(record, indent=2), encoding="utf-8")
        self.executed.append(stage)

    def _save(self, obj: Any, relative: str, stage: str, parents: Sequence[str], seed: Optional[int] = None) -> Path:
        path = self.path(relative)
        save_checkpoint(obj, path, self._provenance(stage, parents, seed))
        self._cache[relative] = obj
        return path

    def _load(self, relative: str) -> Any:
        if relative not in self._cache:
            self._cache[relative] = load_checkpoint(self.path(relative))
        return self._cache[relative]

    # ---- loaded artifacts ----

    def base(self) -> DenoiserModel:
        return self._load(BASE_PATH)

    def classifier(self):
        return self._load(CLASSIFIER_PATH)

    def unlearned(self) -> Dict[str, Any]:
        return {spec.label: self._load(self.erasure_path(spec.label)) for spec in self.config.erasures}

    def unlearned_models(self) -> Dict[str, DenoiserModel]:
        return {label: record.model for label, record in self.unlearned().items()}

    def erasure_paths(self) -> List[str]:
        return [self.erasure_path(spec.label) for spec in self.config.erasures]

    # ---- stages ----

    def train_base(self) -> None:
        cfg = self.config

        def compute() -> List[Path]:
            init_seed, train_seed = cfg.seed_for("base-init"), cfg.seed_for("base-train")
            model = DenoiserModel.initialize(self.world.vocab, RandomStream(init_seed), cfg.model)
            report = train_denoiser(
                model,
                self.world,
                cfg.training.steps,
                OptimizerState(kind="adam", learning_rate=cfg.training.learning_rate),
                train_seed,
                schedule=self.schedule,
                batch_size=cfg.training.batch_size,
                neutral_prob=cfg.training.neutral_prob,
                verbose=self.verbose,
            )
            if report.losses:
                self._log(f"Base model trailing loss {report.trailing_mean():.4f}")
            return [self._save(model, BASE_PATH, "train-base", [], train_seed)]

        self._stage("train-base", ("seed", "world", "schedule", "model", "training"), [], compute)

    def train_classifier(self) -> None:
        cfg = self.config

        def compute() -> List[Path]:
            seed = cfg.seed_for("classifier")
            classifier = train_classifier(self.world, seed=seed, config=cfg.classifier, verbose=self.verbose)
            return [self._save(classifier, CLASSIFIER_PATH, "train-classifier", [], seed)]

        self._stage("train-classifier", ("seed", "world", "classifier"), [], compute)

    def erase_all(self) -> None:
        for spec in self.config.erasures:
            relative = self.erasure_path(spec.label)

            def compute(spec=spec, relative=relative) -> List[Path]:
                seed = self.config.seed_for("erase", spec.label)
                unlearned = erase(self.base(), spec, self.world, self.schedule, seed, verbose=self.verbose)
                return [self._save(unlearned, relative, f"erase-{spec.label}", [BASE_PATH], seed)]

            self._stage(
                f"erase-{spec.label}",
                ("seed", "world", "schedule"),
                [BASE_PATH],
                compute,
                extra=spec.to_dict(),
            )

    def attack_ti(self) -> None:
        cfg = self.config
        ti = cfg.textual_inversion

        def compute() -> List[Path]:
            sources = {BASE_LABEL: self.base(), **self.unlearned_models()}
            embeddings = {}
            for label, model in sources.items():
                v = textual_inversion(
                    model, self.world, cfg.target, ti.iters, ti.lr, ti.wd,
                    seed=cfg.seed_for("ti", label), schedule=self.schedule,
                    batch_size=ti.batch_size, v0_policy=ti.v0_policy, verbose=self.verbose,
                )
                embeddings[f"ti-{label}"] = v.numpy()
            return [self._save(embeddings, TI_PATH, "attack-ti", [BASE_PATH] + self.erasure_paths())]

        self._stage(
            "attack-ti",
            ("seed", "target", "world", "schedule", "textual_inversion"),
            [BASE_PATH] + self.erasure_paths(),
            compute,
        )

    def attack_as(self) -> None:
        cfg, ev = self.config, self.config.evaluation

        def compute() -> List[Path]:
            seed = cfg.seed_for("adversarial-search")
            # only the original model is handed to the search
            search = AdversarialSearch(
                self.base(), self.world, cfg.target, cfg.attack, self.schedule, verbose=self.verbose,
            )
            candidates = search.run(seed)
            preservation = neutral_preservation(
                self.base(), search.surrogate, self.classifier(), ev.neutral_n,
                cfg.seed_for("neutral-preservation"), self.schedule, ev.stride,
            )
            tv = preservation.total_variation
            if not preservation.within(NEUTRAL_TV_BOUND):
                logger.warning(f"Surrogate neutral histogram drifted: TV {tv:.3f} > {NEUTRAL_TV_BOUND}")
            self._log(f"Surrogate neutral-prompt TV distance {tv:.3f}")
            report_path = self.path(NEUTRAL_REPORT_PATH)
            report_path.parent.mkdir(parents=True, exist_ok=True)
            report_path.write_text(
                canonical_json({**preservation.to_dict(), "bound": NEUTRAL_TV_BOUND}, indent=2), encoding="utf-8"
            )
            return [self._save(candidates, CANDIDATES_PATH, "attack-as", [BASE_PATH], seed), report_path]

        self._stage(
            "attack-as",
            ("seed", "target", "world", "schedule", "attack"),
            [BASE_PATH, CLASSIFIER_PATH],
            compute,
            extra={"neutral_n": ev.neutral_n, "stride": ev.stride},
        )

    def select(self) -> None:
        cfg, ev = self.config, self.config.evaluation
        parents = [CANDIDATES_PATH, CLASSIFIER_PATH, BASE_PATH] + self.erasure_paths()

        def compute() -> List[Path]:
            candidates = self._load(CANDIDATES_PATH)
            embeddings, summary = {}, {}
            for mode in ev.selection_modes:
                if mode == "final_loss":
                    choices = select_candidate(candidates, "final_loss")
                else:
                    choices = select_candidate(
                        candidates, mode,
                        models={BASE_LABEL: self.base(), **self.unlearned_models()},
                        classifier=self.classifier(), target=cfg.target, n=ev.selection_n,
                        seed=cfg.seed_for("select"), schedule=self.schedule, stride=ev.stride,
                        subsample=ev.selection_subsample, workers=cfg.workers, verbose=self.verbose,
                    )
                for label, choice in choices.items():
                    embeddings[f"{mode}/{label}"] = choice.embedding
                    summary[f"{mode}/{label}"] = {"index": choice.index, "epoch": choice.epoch, "score": choice.score}
            summary_path = self.path(SELECTION_SUMMARY_PATH)
            summary_path.parent.mkdir(parents=True, exist_ok=True)
            summary_path.write_text(canonical_json(summary, indent=2), encoding="utf-8")
            return [self._save(embeddings, SELECTION_PATH, "select", parents), summary_path]

        self._stage("select", ("seed", "target", "schedule", "evaluation"), parents, compute)

    def attack_inputs(self) -> List[AttackInput]:
        """Transfer-matrix rows: literal token, TI baselines, and one row per selection mode."""
        target = self.config.target
        ti = self._load(TI_PATH)
        selection = self._load(SELECTION_PATH)
        attacks = [
            AttackInput("literal", token=concept_token(target)),
            AttackInput("ti-base", embedding=ti[f"ti-{BASE_LABEL}"]),
        ]
        for spec in self.config.erasures:
            attacks.append(AttackInput(f"ti-{spec.label}", embedding=ti[f"ti-{spec.label}"], white_box_model=spec.label))
        for mode in self.config.evaluation.selection_modes:
            chosen = {name.split("/", 1)[1]: values for name, values in selection.items() if name.startswith(f"{mode}/")}
            if list(chosen) == ["surrogate"]:
                attacks.append(AttackInput(f"as-{mode}", embedding=chosen["surrogate"]))
            else:
                attacks.append(AttackInput(f"as-{mode}", per_model=chosen))
        return attacks

    def evaluate(self) -> None:
        cfg, ev = self.config, self.config.evaluation
        parents = [BASE_PATH, CLASSIFIER_PATH, TI_PATH, SELECTION_PATH] + self.erasure_paths()

        def compute() -> List[Path]:
            matrix = build_transfer_matrix(
                self.base(), self.unlearned_models(), self.attack_inputs(), self.classifier(),
                cfg.target, ev.n, cfg.seed_for("evaluate"), self.schedule,
                stride=ev.stride, workers=cfg.workers, sampler=ev.sampler, verbose=self.verbose,
            )
            self._log(f"Row averages: {dict(zip(matrix.attacks, np.round(matrix.row_averages(), 3)))}")
            return emit_report(
                {"transfer": matrix}, self.path("reports/transfer"), ev.formats,
                self._provenance("evaluate", parents),
            )

        self._stage("evaluate", ("seed", "target", "schedule", "evaluation"), parents, compute)

    def atlas(self) -> None:
        cfg, ev, ti = self.config, self.config.evaluation, self.config.textual_inversion
        parents = [BASE_PATH, CANDIDATES_PATH] + self.erasure_paths()

        def compute() -> List[Path]:
            labeled = []
            sources = {BASE_LABEL: self.base(), **self.unlearned_models()}
            for label, model in sources.items():
                for run in range(ev.atlas_ti_runs):
                    v = textual_inversion(
                        model, self.world, cfg.target, ev.atlas_ti_iters, ti.lr, ti.wd,
                        seed=cfg.seed_for("atlas", label, run), schedule=self.schedule,
                        batch_size=ti.batch_size, v0_policy=ti.v0_policy,
                    )
                    labeled.append((f"ti-{label}", v.numpy()))
            ti_labels = [f"ti-{label}" for label in sources]
            labeled.extend(("as", entry.embedding) for entry in self._load(CANDIDATES_PATH).entries)
            report = embedding_atlas(labeled, silhouette_labels=ti_labels)
            return emit_report(
                {"atlas": report}, self.path("reports/atlas"), ev.formats,
                self._provenance("atlas", parents),
            )

        self._stage("atlas", ("seed", "target", "schedule", "textual_inversion", "evaluation"), parents, compute)

    def ablate(self) -> None:
        cfg, ev = self.config, self.config.evaluation
        parents = [BASE_PATH, CLASSIFIER_PATH] + self.erasure_paths()

        def compute() -> List[Path]:
            report = ablation_trace(
                self.base(), self.world, cfg.target, cfg.attack, self.unlearned_models(), self.classifier(),
                ev.record_every, seed=cfg.seed_for("ablate"), schedule=self.schedule,
                n=ev.ablation_n, stride=ev.stride, verbose=self.verbose,
            )
            return emit_report(
                {"ablation": report}, self.path("reports/ablation"), ev.formats,
                self._provenance("ablate", parents),
            )

        self._stage("ablate", ("seed", "target", "world", "schedule", "attack", "evaluation"), parents, compute)

    def run(self, targets: Optional[Iterable[str]] = None) -> List[str]:
        """
        Execute the target stages and their dependencies.

        Returns:
            Names of the stages that ran (skipped stages excluded)

        Raises:
            StageError: The failing stage, chained to its cause
        """
        stages = required_stages(targets)
        self.config.write_effective(self.out / EFFECTIVE_CONFIG)
        logger.info(f"Pipeline {self.config_hash[:12]}: stages {stages} -> {self.out}")
        handlers = {
            "train-base": self.train_base,
            "train-classifier": self.train_classifier,
            "erase": self.erase_all,
            "attack-ti": self.attack_ti,
            "attack-as": self.attack_as,
            "select": self.select,
            "evaluate": self.evaluate,
            "atlas": self.atlas,
            "ablate": self.ablate,
        }
        for stage in stages:
            handlers[stage]()
        logger.info(f"Pipeline finished: {len(self.executed)} stages ran, {len(self.skipped)} skipped")
        return list(self.executed)


def run_pipeline(
    config: Union[ExperimentConfig, str, Path],
    output_dir: Optional[Union[str, Path]] = None,
    resume: bool = True,
    targets: Optional[Iterable[str]] = None,
    verbose: bool = False,
) -> PipelineRunner:
    """
    Run the full experiment (or the stages needed for `targets`).

    Example usage:
        >>> runner = run_pipeline("configs/default.json", output_dir="results/run-0")
        >>> runner.executed
    """
    if not isinstance(config, ExperimentConfig):
        config = ExperimentConfig.from_json(config)
    runner = PipelineRunner(config, output_dir=output_dir, resume=resume, verbose=verbose)
    runner.run(targets)
    return runner
