"""
Static result plots: pretraining loss curves and the missing-modality
degradation heatmap (subsets x configurations).
"""

import logging
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .tables import comparison_table, read_table  # noqa: E402

logger = logging.getLogger(__name__)

DPI = 120


def plot_loss_curves(losses_path: Path, out_path: Path) -> Path:
    """One line per loss term from a ``losses.tsv`` (epoch, term, value)."""
    frame = read_table(losses_path)
    out_path = Path(out_path)
    out_path.parent.mkdir(parents=True, exist_ok=True)

    fig, ax = plt.subplots(figsize=(7, 4))
    for term, rows in frame.groupby("term", sort=False):
        ax.plot(rows["epoch"], rows["value"], label=term, linewidth=2.0 if term == "total" else 1.0)
    ax.set_xlabel("epoch")
    ax.set_ylabel("loss")
    ax.set_yscale("log")
    ax.grid(True, alpha=0.3)
    ax.legend(fontsize=7, ncol=2)
    fig.tight_layout()
    fig.savefig(out_path, dpi=DPI)
    plt.close(fig)
    logger.info("Wrote %s", out_path)
    return out_path


def plot_degradation_heatmap(eval_path: Path, out_path: Path) -> Path:
    """mIoU per (subset, configuration) from an ``eval.tsv`` with one or more configurations."""
    table = comparison_table(read_table(eval_path))
    out_path = Path(out_path)
    out_path.parent.mkdir(parents=True, exist_ok=True)

    values = table.to_numpy(dtype=np.float64)
    fig, ax = plt.subplots(figsize=(1.4 * values.shape[1] + 3, 0.35 * values.shape[0] + 1.5))
    image = ax.imshow(values, cmap="viridis", vmin=0.0, vmax=1.0, aspect="auto")
    ax.set_xticks(range(values.shape[1]), labels=list(table.columns), rotation=30, ha="right", fontsize=8)
    ax.set_yticks(range(values.shape[0]), labels=list(table.index), fontsize=7)
    for (row, col), value in np.ndenumerate(values):
        ax.text(col, row, "nan" if np.isnan(value) else f"{value:.2f}", ha="center", va="center", fontsize=6, color="w")
    fig.colorbar(image, ax=ax, label="mIoU")
    fig.tight_layout()
    fig.savefig(out_path, dpi=DPI)
    plt.close(fig)
    logger.info("Wrote %s (%d subsets x %d configurations)", out_path, *values.shape)
    return out_path
