"""
Static SVG figures for restoration experiments: transfer heatmap, embedding
atlas scatter and ablation traces.

Figures are written byte-stable: the SVG id salt is fixed and no date is
embedded, so the same results always produce the same file.
"""

from pathlib import Path
from typing import List, Optional, Union

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np
import seaborn as sns

from utils.metrics.ablation import AblationReport
from utils.metrics.atlas import AtlasReport
from utils.metrics.transfer import TransferMatrix

SVG_HASH_SALT = "concept-restoration"
SVG_METADATA = {"Date": None}
ATLAS_GID_PREFIX = "atlas-"


class ReportVisualizer:
    """
    Figure emitter for transfer matrices, atlases and ablation traces.

    Args:
        style: Seaborn style ('whitegrid', 'darkgrid', etc.)
    """

    def __init__(self, style: str = 'whitegrid'):
        sns.set_style(style)
        self.default_colors = sns.color_palette("husl", 8)
        plt.rcParams['svg.hashsalt'] = SVG_HASH_SALT
        plt.rcParams['svg.fonttype'] = 'none'

    def _colors(self, count: int):
        return self.default_colors if count <= len(self.default_colors) else sns.color_palette("husl", count)

    @staticmethod
    def _save(fig, save_path: Union[str, Path]) -> Path:
        path = Path(save_path)
        path.parent.mkdir(parents=True, exist_ok=True)
        fig.savefig(path, format="svg", bbox_inches='tight', metadata=SVG_METADATA)
        plt.close(fig)
        return path

    def plot_transfer(
        self,
        matrix: TransferMatrix,
        save_path: Union[str, Path],
        kind: str = "accuracy",
        title: Optional[str] = None,
        figsize: tuple = (8, 5),
        **kwargs
    ) -> Path:
        """Heatmap of the matrix with its average column; white-box cells get a '*'."""
        frame = matrix.to_frame(kind)
        labels = np.array([[f"{value:.3f}" for value in row] for row in frame.to_numpy()], dtype=object)
        for i in range(len(matrix.attacks)):
            for j in range(len(matrix.models)):
                if matrix.white_box[i, j]:
                    labels[i, j] += "*"

        fig, ax = plt.subplots(figsize=figsize)
        if frame.size:
            sns.heatmap(
                frame,
                annot=labels,
                fmt="",
                cmap=kwargs.get('cmap', 'YlOrRd'),
                vmin=0.0,
                vmax=1.0,
                cbar_kws={'label': kwargs.get('cbar_label', kind.replace("_", " "))},
                ax=ax,
            )
        ax.set_title(title or f"Restoration {kind.replace('_', ' ')}")
        ax.set_xlabel(kwargs.get('xlabel', 'model'))
        ax.set_ylabel(kwargs.get('ylabel', 'attack'))
        return self._save(fig, save_path)

    def plot_atlas(
        self,
        report: AtlasReport,
        save_path: Union[str, Path],
        title: Optional[str] = None,
        figsize: tuple = (7, 6),
    ) -> Path:
        """
        Scatter of the 2-D projection, one color per source label.

        Each label's points form one SVG group with id "atlas-<label>".
        """
        frame = report.to_frame()
        labels = report.unique_labels()
        colors = self._colors(len(labels))
        fig, ax = plt.subplots(figsize=figsize)
        for idx, label in enumerate(labels):
            rows = frame[frame["label"] == label]
            ax.scatter(rows["x"], rows["y"], s=18, color=colors[idx], label=label, gid=f"{ATLAS_GID_PREFIX}{label}")
        ax.set_title(title or "Embedding atlas")
        ax.set_xlabel("PC 1")
        ax.set_ylabel("PC 2")
        ax.legend(bbox_to_anchor=(1.05, 1), loc="upper left")
        return self._save(fig, save_path)

    def plot_ablation(
        self,
        report: AblationReport,
        save_path: Union[str, Path],
        kind: str = "accuracy",
        title: Optional[str] = None,
        figsize: tuple = (9, 5),
    ) -> Path:
        """Score per recorded epoch; solid lines with the search, dashed without."""
        frame = report.to_frame()
        models = list(dict.fromkeys(frame["model"]))
        colors = self._colors(len(models))
        fig, ax = plt.subplots(figsize=figsize)
        for idx, model in enumerate(models):
            for variant, style in (("with_as", "-"), ("without_as", "--")):
                rows = frame[(frame["model"] == model) & (frame["variant"] == variant)]
                ax.plot(rows["epoch"], rows[kind], style, marker='o', color=colors[idx], label=f"{model} ({variant})")
        ax.set_title(title or f"Ablation: {kind.replace('_', ' ')} per epoch")
        ax.set_xlabel("epoch")
        ax.set_ylabel(kind.replace("_", " "))
        ax.set_ylim(-0.02, 1.02)
        ax.legend(bbox_to_anchor=(1.05, 1), loc="upper left", fontsize="small")
        ax.grid(True, linestyle='--', alpha=0.7)
        return self._save(fig, save_path)

    def create_report(
        self,
        output_dir: Union[str, Path],
        transfer: Optional[TransferMatrix] = None,
        atlas: Optional[AtlasReport] = None,
        ablation: Optional[AblationReport] = None,
    ) -> List[Path]:
        """Write every available figure into `output_dir`; returns the written paths."""
        output_dir = Path(output_dir)
        written = []
        if transfer is not None:
            written.append(self.plot_transfer(transfer, output_dir / "transfer_matrix.svg"))
        if atlas is not None:
            written.append(self.plot_atlas(atlas, output_dir / "atlas.svg"))
        if ablation is not None:
            written.append(self.plot_ablation(ablation, output_dir / "ablation.svg"))
        return written


# Example usage:
"""
visualizer = ReportVisualizer()
visualizer.plot_atlas(embedding_atlas(labeled), "results/atlas.svg")
visualizer.create_report("results", transfer=matrix, ablation=trace)
"""
