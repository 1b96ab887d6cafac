"""
Sample container.

One directory per sample, written through the tensor bundle format: a JSON
manifest naming each modality with its shape and dtype, and one raw binary
blob per raster.
"""

from dataclasses import dataclass
from pathlib import Path
from typing import Dict, Optional

import numpy as np

import config
from ..utils.bundles import read_bundle, write_bundle
from ..utils.errors import ContainerError


@dataclass(eq=False)
class Sample:
    """One tile: co-registered modality rasters plus the clean label raster."""

    sample_id: str
    optical: np.ndarray
    sar: np.ndarray
    dem: np.ndarray
    map: np.ndarray
    label: np.ndarray

    @property
    def size(self) -> int:
        return int(self.label.shape[-1])

    def rasters(self) -> Dict[str, np.ndarray]:
        return {name: getattr(self, name) for name in config.SAMPLE_RASTERS}

    def equals(self, other: "Sample") -> bool:
        if self.sample_id != other.sample_id:
            return False
        return all(
            a.dtype == b.dtype and np.array_equal(a, b)
            for a, b in zip(self.rasters().values(), other.rasters().values())
        )


def validate_sample(sample: Sample, num_classes: Optional[int] = None, patch_size: Optional[int] = None) -> Sample:
    """Check raster shapes, value ranges and finiteness, naming the offending modality."""
    rasters = sample.rasters()
    height, width = sample.label.shape[-2:]
    for name, raster in rasters.items():
        expected_channels = config.MODALITY_CHANNELS.get(name, 1)
        if raster.shape != (expected_channels, height, width):
            raise ContainerError(
                f"{name}: expected shape {(expected_channels, height, width)}, got {raster.shape}",
                name=name,
            )
        if not np.all(np.isfinite(raster)):
            raise ContainerError(f"{name}: raster holds non-finite values", name=name)
    if patch_size is not None and (height % patch_size or width % patch_size):
        raise ContainerError(f"rasters of {height}x{width} are not divisible by patch size {patch_size}")
    if num_classes is not None:
        for name in ("map", "label"):
            values = rasters[name]
            if values.min(initial=0) < 0 or values.max(initial=0) >= num_classes:
                raise ContainerError(f"{name}: class ids outside [0, {num_classes})", name=name)
    return sample


def write_sample(sample: Sample, directory: Path, num_classes: Optional[int] = None) -> Path:
    """Write ``sample`` into ``directory/<sample_id>`` and return that path."""
    validate_sample(sample, num_classes)
    path = Path(directory) / sample.sample_id
    meta = {"sample_id": sample.sample_id, "modalities": list(config.SAMPLE_RASTERS)}
    if num_classes is not None:
        meta["num_classes"] = num_classes
    return write_bundle(path, sample.rasters(), meta)


def read_sample(path: Path) -> Sample:
    """Read a sample directory back; raises ContainerError naming the bad modality."""
    path = Path(path)
    arrays, meta = read_bundle(path)
    missing = [name for name in config.SAMPLE_RASTERS if name not in arrays]
    if missing:
        raise ContainerError(f"{path}: manifest lacks {', '.join(missing)}", name=missing[0])
    sample = Sample(sample_id=meta.get("sample_id", path.name), **{name: arrays[name] for name in config.SAMPLE_RASTERS})
    return validate_sample(sample, meta.get("num_classes"))
