"""
Plain-text metric tables (tab-separated, header row, one record per line).

Formats
-------
losses.tsv       epoch, term, value
eval.tsv         config, subset, miou, iou_<class>...   (NaN for classes absent from the reference)
ablation.tsv     subset, <one mIoU column per configuration>
alignment.tsv    modality, positive, negative, gap
"""

from pathlib import Path
from typing import Iterable, Mapping, Sequence

import pandas as pd

from .errors import ContainerError

SEPARATOR = "\t"
FLOAT_FORMAT = "%.6f"


def write_table(path: Path, records: Iterable[Mapping], columns: Sequence[str] = None) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    frame = pd.DataFrame(list(records), columns=list(columns) if columns else None)
    frame.to_csv(path, sep=SEPARATOR, index=False, float_format=FLOAT_FORMAT, na_rep="nan")
    return path


def write_frame(path: Path, frame: pd.DataFrame) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    frame.to_csv(path, sep=SEPARATOR, index=False, float_format=FLOAT_FORMAT, na_rep="nan")
    return path


def append_rows(path: Path, records: Iterable[Mapping], columns: Sequence[str]) -> Path:
    """Append records, writing the header only when the file is new."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    frame = pd.DataFrame(list(records), columns=list(columns))
    frame.to_csv(path, sep=SEPARATOR, index=False, float_format=FLOAT_FORMAT, mode="a", header=not path.exists())
    return path


def read_table(path: Path) -> pd.DataFrame:
    path = Path(path)
    if not path.exists():
        raise ContainerError(f"missing table: {path}", name=str(path))
    return pd.read_csv(path, sep=SEPARATOR)


def truncate_after(path: Path, column: str, last: int) -> None:
    """Drop rows whose ``column`` exceeds ``last`` (used when resuming a run)."""
    path = Path(path)
    if not path.exists():
        return
    frame = read_table(path)
    frame[frame[column] <= last].to_csv(path, sep=SEPARATOR, index=False, float_format=FLOAT_FORMAT)


def comparison_table(frame: pd.DataFrame, value: str = "miou") -> pd.DataFrame:
    """Pivot eval records into subsets x configurations, keeping the subset order of first appearance."""
    order = list(dict.fromkeys(frame["subset"]))
    configs = list(dict.fromkeys(frame["config"]))
    table = frame.pivot(index="subset", columns="config", values=value)
    return table.reindex(index=order, columns=configs)
