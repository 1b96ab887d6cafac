"""
Segmentation evaluation over every modality subset.

IoU_c = TP / (TP + FP + FN) from the K x K confusion matrix (rows: reference,
columns: prediction). Classes that never occur in the reference are reported
as NaN and left out of the mean.
"""

import logging
from dataclasses import dataclass
from pathlib import Path
from typing import List, Optional, Sequence

import numpy as np
import torch
from sklearn.metrics import confusion_matrix as sk_confusion_matrix

from ..generators.dataset import TileDataset
from ..utils.bundles import read_bundle, write_bundle
from ..utils.errors import ContractViolation
from ..utils.tables import read_table, write_table
from .downstream import FusionSegmenter, segment
from .subsets import Subset, all_subsets, subset_label

logger = logging.getLogger(__name__)

EVAL_FILE = "eval.tsv"
CONFUSION_DIR = "confusion"


@dataclass
class EvalReport:
    config: str
    subset: Subset
    miou: float
    iou: np.ndarray
    confusion: np.ndarray

    def record(self) -> dict:
        row = {"config": self.config, "subset": subset_label(self.subset), "miou": self.miou}
        row.update({f"iou_{c}": float(v) for c, v in enumerate(self.iou)})
        return row


def confusion_matrix(prediction: np.ndarray, reference: np.ndarray, num_classes: int) -> np.ndarray:
    return sk_confusion_matrix(
        np.asarray(reference).ravel(), np.asarray(prediction).ravel(), labels=np.arange(num_classes)
    ).astype(np.int64)


def iou_per_class(confusion: np.ndarray) -> np.ndarray:
    confusion = np.asarray(confusion, dtype=np.float64)
    tp = np.diag(confusion)
    reference = confusion.sum(axis=1)
    union = reference + confusion.sum(axis=0) - tp
    with np.errstate(invalid="ignore", divide="ignore"):
        iou = tp / union
    iou[reference == 0] = np.nan
    return iou


def mean_iou(confusion: np.ndarray) -> float:
    iou = iou_per_class(confusion)
    if np.all(np.isnan(iou)):
        return float("nan")
    return float(np.nanmean(iou))


def evaluate(model: FusionSegmenter, dataset: TileDataset, subsets: Optional[Sequence[Subset]] = None,
             config_name: str = "model", batch_size: int = 32) -> List[EvalReport]:
    """One report per subset (all non-empty subsets by default, full set first)."""
    if len(dataset) == 0:
        raise ContractViolation("cannot evaluate on an empty split")
    subsets = list(subsets) if subsets is not None else all_subsets(model.modalities)
    num_classes = model.head.num_classes
    model.eval()
    reports = []
    with torch.no_grad():
        for subset in subsets:
            confusion = np.zeros((num_classes, num_classes), dtype=np.int64)
            for batch in dataset.iter_batches(batch_size):
                prediction = segment(model, batch, subset).argmax(dim=1)
                confusion += confusion_matrix(prediction.numpy(), batch["label"][:, 0].numpy(), num_classes)
            report = EvalReport(config_name, tuple(subset), mean_iou(confusion), iou_per_class(confusion), confusion)
            logger.info("%s %-24s mIoU=%.4f", config_name, subset_label(subset), report.miou)
            reports.append(report)
    return reports


def write_reports(reports: Sequence[EvalReport], directory: Path) -> Path:
    """eval.tsv plus the confusion matrices as a tensor bundle; returns the table path."""
    directory = Path(directory)
    num_classes = reports[0].confusion.shape[0]
    columns = ["config", "subset", "miou"] + [f"iou_{c}" for c in range(num_classes)]
    path = write_table(directory / EVAL_FILE, [r.record() for r in reports], columns=columns)
    write_bundle(
        directory / CONFUSION_DIR,
        {f"{r.config}/{subset_label(r.subset)}": r.confusion for r in reports},
        meta={"rows": "reference", "columns": "prediction"},
    )
    return path


def read_reports(directory: Path) -> List[EvalReport]:
    directory = Path(directory)
    frame = read_table(directory / EVAL_FILE)
    matrices, _ = read_bundle(directory / CONFUSION_DIR)
    reports = []
    for row in frame.to_dict("records"):
        iou = np.array([row[c] for c in frame.columns if c.startswith("iou_")], dtype=np.float64)
        key = f"{row['config']}/{row['subset']}"
        reports.append(EvalReport(row["config"], tuple(row["subset"].split("+")), float(row["miou"]), iou, matrices[key]))
    return reports
