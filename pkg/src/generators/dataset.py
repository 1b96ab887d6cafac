"""
Dataset generation and loading.

Generation is embarrassingly parallel: every sample owns a seeded stream, so
the output is identical whatever the number of workers.
"""

import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, Iterator, List, Optional, Sequence, Tuple

import numpy as np
import torch
from torch.utils.data import Dataset

import config
from ..utils.errors import ContainerError, ContractViolation
from ..utils.run_config import DataConfig
from .container import Sample, read_sample, write_sample
from .scene import generate_scene, render_sample
from .splits import SplitManifest, make_splits

logger = logging.getLogger(__name__)

SAMPLES_DIR = "samples"
SPLITS_FILE = "splits.json"


@dataclass(frozen=True)
class _GenerationTask:
    index: int
    seed: int
    data: DataConfig
    patch_size: int
    directory: Path


def sample_seed(seed: int, index: int) -> int:
    return int(np.random.SeedSequence([seed, index]).generate_state(1)[0])


def _generate_one(task: _GenerationTask) -> str:
    scene = generate_scene(
        sample_seed(task.seed, task.index),
        size=task.data.tile_size,
        num_classes=task.data.num_classes,
        object_count_range=task.data.object_count_range,
        object_extent_range=task.data.object_extent_range,
        patch_size=task.patch_size,
    )
    sample = render_sample(scene, task.data.noise, sample_id=f"tile_{task.index:05d}")
    write_sample(sample, task.directory, num_classes=task.data.num_classes)
    return sample.sample_id


def generate_dataset(root: Path, data: DataConfig, seed: int, patch_size: int, workers: int = 1) -> SplitManifest:
    """Write ``data.num_samples`` samples plus a split manifest under ``root``."""
    root = Path(root)
    directory = root / SAMPLES_DIR
    directory.mkdir(parents=True, exist_ok=True)
    tasks = [_GenerationTask(i, seed, data, patch_size, directory) for i in range(data.num_samples)]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            ids = list(pool.map(_generate_one, tasks, chunksize=16))
    else:
        ids = [_generate_one(task) for task in tasks]

    manifest = make_splits(ids, seed, data.split_ratios)
    manifest.save(root / SPLITS_FILE)
    logger.info("Generated %d samples under %s (%s)", len(ids), root, manifest.sizes())
    return manifest


def load_split(root: Path, split: str) -> List[Sample]:
    root = Path(root)
    manifest = SplitManifest.load(root / SPLITS_FILE)
    return [read_sample(root / SAMPLES_DIR / sample_id) for sample_id in manifest.ids(split)]


class TileDataset(Dataset):
    """In-memory tensors for one split: float modalities as float32, map/label as int64."""

    def __init__(self, samples: Sequence[Sample]):
        if not samples:
            raise ContractViolation("dataset split is empty")
        self.ids = [s.sample_id for s in samples]
        self.tensors: Dict[str, torch.Tensor] = {}
        for name in config.SAMPLE_RASTERS:
            stacked = np.stack([getattr(s, name) for s in samples])
            if name in ("map", "label"):
                self.tensors[name] = torch.from_numpy(stacked.astype(np.int64))
            else:
                self.tensors[name] = torch.from_numpy(stacked.astype(np.float32))

    @classmethod
    def from_directory(cls, root: Path, split: str) -> "TileDataset":
        root = Path(root)
        if not (root / SPLITS_FILE).exists():
            raise ContainerError(f"no dataset at {root} (missing {SPLITS_FILE}); run `main.py synth` first", name="splits")
        return cls(load_split(root, split))

    def __len__(self) -> int:
        return len(self.ids)

    def __getitem__(self, index: int) -> Dict[str, torch.Tensor]:
        return {name: tensor[index] for name, tensor in self.tensors.items()}

    def batch(self, indices: Sequence[int]) -> Dict[str, torch.Tensor]:
        index = torch.as_tensor(list(indices), dtype=torch.long)
        return {name: tensor.index_select(0, index) for name, tensor in self.tensors.items()}

    def iter_batches(self, batch_size: int, rng: Optional[np.random.Generator] = None,
                     drop_last: bool = False) -> Iterator[Dict[str, torch.Tensor]]:
        """Yield batches in a fixed order, or shuffled by ``rng``."""
        order = rng.permutation(len(self)) if rng is not None else np.arange(len(self))
        stop = len(order) - len(order) % batch_size if drop_last and len(order) >= batch_size else len(order)
        for start in range(0, stop, batch_size):
            yield self.batch(order[start:start + batch_size].tolist())

    def shape(self) -> Tuple[int, int]:
        return tuple(self.tensors["label"].shape[-2:])
