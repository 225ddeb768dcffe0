"""
Report emission: CSV, JSON and SVG artifacts for transfer matrices, atlases
and ablation traces, each directory carrying a provenance.json.
"""

import logging
from pathlib import Path
from typing import Any, Dict, Iterable, List, Optional, Union

import pandas as pd

from utils.metrics.ablation import AblationReport
from utils.metrics.atlas import AtlasReport
from utils.metrics.transfer import TransferMatrix
from utils.visualization.comparison_plots import ReportVisualizer
from evaluation_pipelines.config import REPORT_FORMATS, canonical_json

logger = logging.getLogger(__name__)

PROVENANCE_FILE = "provenance.json"
RESULT_KINDS = ("transfer", "atlas", "ablation")


def write_csv(frame: pd.DataFrame, path: Path, index: bool = False) -> Path:
    """CSV with LF line endings and round-trip float formatting."""
    frame.to_csv(path, index=index, lineterminator="\n")
    return path


def write_json(data: Any, path: Path) -> Path:
    path.write_text(canonical_json(data, indent=2), encoding="utf-8")
    return path


def read_matrix_csv(path: Union[str, Path]) -> pd.DataFrame:
    """Re-parse a transfer-matrix CSV (attack ids as index)."""
    return pd.read_csv(path, index_col=0, float_precision="round_trip")


def _emit_transfer(matrix: TransferMatrix, out: Path, formats, visualizer) -> List[Path]:
    written = []
    if "csv" in formats:
        written.append(write_csv(matrix.to_frame("accuracy"), out / "transfer_matrix.csv", index=True))
        written.append(write_csv(matrix.to_frame("mean_probability"), out / "transfer_probability.csv", index=True))
    if "json" in formats:
        written.append(write_json(matrix.to_dict(), out / "transfer_matrix.json"))
    if "svg" in formats:
        written.append(visualizer.plot_transfer(matrix, out / "transfer_matrix.svg"))
    return written


def _emit_atlas(report: AtlasReport, out: Path, formats, visualizer) -> List[Path]:
    written = []
    if "csv" in formats:
        written.append(write_csv(report.to_frame(), out / "atlas.csv"))
        written.append(write_csv(report.statistics_frame(), out / "atlas_statistics.csv"))
    if "json" in formats:
        written.append(write_json(report.to_dict(), out / "atlas.json"))
    if "svg" in formats:
        written.append(visualizer.plot_atlas(report, out / "atlas.svg"))
    return written


def _emit_ablation(report: AblationReport, out: Path, formats, visualizer) -> List[Path]:
    written = []
    if "csv" in formats:
        written.append(write_csv(report.to_frame(), out / "ablation.csv"))
    if "json" in formats:
        data = {
            trace.variant: {
                "epochs": trace.epochs,
                "models": trace.models,
                "accuracy": trace.accuracy.tolist(),
                "mean_probability": trace.mean_probability.tolist(),
                "end_mean": trace.end_mean(),
            }
            for trace in report.traces()
        }
        data["models_favoring_search"] = report.models_favoring_search()
        written.append(write_json(data, out / "ablation.json"))
    if "svg" in formats:
        written.append(visualizer.plot_ablation(report, out / "ablation.svg"))
    return written


_EMITTERS = {
    "transfer": _emit_transfer,
    "atlas": _emit_atlas,
    "ablation": _emit_ablation,
}


def emit_report(
    results: Dict[str, Any],
    output_dir: Union[str, Path],
    formats: Iterable[str] = REPORT_FORMATS,
    provenance: Optional[Dict[str, Any]] = None,
) -> List[Path]:
    """
    Write every result in `results` ("transfer", "atlas", "ablation") in the
    requested formats, plus provenance.json.

    Args:
        results: Result kind -> TransferMatrix / AtlasReport / AblationReport
        output_dir: Report directory (created if missing)
        formats: Subset of ("csv", "json", "svg")
        provenance: Config hash, stage name and parent ids written beside the reports

    Returns:
        Paths written, provenance.json last

    Raises:
        ValueError: Unknown result kind or format
        OSError: Unwritable directory
    """
    formats = tuple(formats)
    for fmt in formats:
        if fmt not in REPORT_FORMATS:
            raise ValueError(f"Unknown report format '{fmt}', expected one of {REPORT_FORMATS}")
    unknown = sorted(set(results) - set(RESULT_KINDS))
    if unknown:
        raise ValueError(f"Unknown result kinds: {unknown}")

    out = Path(output_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
        visualizer = ReportVisualizer()
        written: List[Path] = []
        for kind in RESULT_KINDS:
            if results.get(kind) is not None:
                written.extend(_EMITTERS[kind](results[kind], out, formats, visualizer))
        written.append(write_json(dict(provenance or {}), out / PROVENANCE_FILE))
    except OSError as e:
        logger.error(f"Error writing reports to {out}: {e}")
        raise
    logger.info(f"Wrote {len(written)} report files to {out}")
    return written
