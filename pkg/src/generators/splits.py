"""
Dataset splits.
"""

import json
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Dict, List, Sequence, Tuple

import numpy as np

from ..utils.errors import ConfigurationError, ContainerError, ContractViolation
from ..utils.seeding import Stream, rng_for

SPLIT_NAMES = ("train", "val", "test")


@dataclass(frozen=True)
class SplitManifest:
    train: List[str]
    val: List[str]
    test: List[str]
    seed: int
    ratios: Tuple[float, float, float]

    def ids(self, split: str) -> List[str]:
        if split not in SPLIT_NAMES:
            raise ContractViolation(f"unknown split '{split}', expected one of {SPLIT_NAMES}")
        return getattr(self, split)

    def sizes(self) -> Dict[str, int]:
        return {name: len(self.ids(name)) for name in SPLIT_NAMES}

    def save(self, path: Path) -> Path:
        path = Path(path)
        path.write_text(json.dumps(asdict(self), indent=2))
        return path

    @classmethod
    def load(cls, path: Path) -> "SplitManifest":
        path = Path(path)
        if not path.exists():
            raise ContainerError(f"missing split manifest: {path}", name="splits")
        data = json.loads(path.read_text())
        return cls(
            train=list(data["train"]),
            val=list(data["val"]),
            test=list(data["test"]),
            seed=int(data["seed"]),
            ratios=tuple(data["ratios"]),
        )


def _largest_remainder(total: int, ratios: Sequence[float]) -> List[int]:
    raw = np.asarray(ratios, dtype=np.float64) * total
    counts = np.floor(raw).astype(int)
    remainder = total - int(counts.sum())
    # stable order so ties go to the earlier split
    order = np.argsort(-(raw - counts), kind="stable")
    counts[order[:remainder]] += 1
    return counts.tolist()


def make_splits(ids: Sequence[str], seed: int, ratios: Tuple[float, float, float] = (0.8, 0.1, 0.1)) -> SplitManifest:
    """Deterministic, disjoint and exhaustive train/val/test split of ``ids``."""
    if not ids:
        raise ContractViolation("cannot split an empty id list")
    if len(ratios) != len(SPLIT_NAMES) or any(r <= 0 for r in ratios):
        raise ConfigurationError(f"split ratios must be three positive numbers, got {ratios}")
    if abs(sum(ratios) - 1.0) > 1e-9:
        raise ConfigurationError(f"split ratios must sum to 1, got {sum(ratios)}")
    if len(set(ids)) != len(ids):
        raise ContractViolation("sample ids must be unique")

    ordered = sorted(ids)
    permutation = rng_for(seed, Stream.SPLIT).permutation(len(ordered))
    shuffled = [ordered[i] for i in permutation]
    counts = _largest_remainder(len(shuffled), ratios)
    bounds = np.cumsum([0] + counts)
    parts = [shuffled[bounds[i]:bounds[i + 1]] for i in range(len(SPLIT_NAMES))]
    return SplitManifest(train=parts[0], val=parts[1], test=parts[2], seed=seed, ratios=tuple(ratios))
