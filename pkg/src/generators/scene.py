"""
Synthetic Scene Generator

Latent scenes are lists of shaped objects with a class and a height. Rendering
turns one scene into four co-registered modality rasters plus a clean label
raster. Each modality carries part of the class information:

- optical colour is shared by classes with the same ``class % len(palette)``;
- elevation is shared by classes with the same ``class // len(palette)``;
- SAR responds at object boundaries, scaled by height and class roughness;
- the map is the label with a fraction of pixels flipped to random classes.
"""

import json
from dataclasses import asdict, dataclass, field
from typing import List, Literal, Tuple

import numpy as np
from scipy import ndimage

import config
from ..utils.errors import ConfigurationError
from ..utils.run_config import NoiseConfig
from ..utils.seeding import Stream, rng_for
from .container import Sample

Shape = Literal["rectangle", "ellipse"]


@dataclass(frozen=True)
class SceneObject:
    shape: Shape
    class_id: int
    center: Tuple[float, float]
    extent: Tuple[float, float]
    height: float


@dataclass(frozen=True)
class LatentScene:
    """Seeded object layout for one tile; regenerating from the seed is bit-identical."""

    seed: int
    size: int
    num_classes: int
    objects: List[SceneObject] = field(default_factory=list)

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True)

    def rasterize(self) -> Tuple[np.ndarray, np.ndarray]:
        """Class raster (background 0) and per-pixel object height; later objects overwrite earlier ones."""
        rows, cols = np.mgrid[0:self.size, 0:self.size].astype(np.float64) + 0.5
        label = np.zeros((self.size, self.size), dtype=np.int32)
        height = np.zeros((self.size, self.size), dtype=np.float64)
        for obj in self.objects:
            dy = (rows - obj.center[0]) / obj.extent[0]
            dx = (cols - obj.center[1]) / obj.extent[1]
            if obj.shape == "rectangle":
                inside = (np.abs(dy) <= 1.0) & (np.abs(dx) <= 1.0)
            else:
                inside = dy ** 2 + dx ** 2 <= 1.0
            label[inside] = obj.class_id
            height[inside] = obj.height
        return label, height


def generate_scene(seed: int,
                   size: int = config.DEFAULT_TILE_SIZE,
                   num_classes: int = config.DEFAULT_NUM_CLASSES,
                   object_count_range: Tuple[int, int] = (2, 6),
                   object_extent_range: Tuple[int, int] = (3, 10),
                   patch_size: int = config.DEFAULT_PATCH_SIZE) -> LatentScene:
    """Draw a scene whose objects are a pure function of ``seed``."""
    if size <= 0 or size % patch_size:
        raise ConfigurationError(f"tile size {size} must be a positive multiple of patch size {patch_size}")
    if num_classes < 2:
        raise ConfigurationError(f"num_classes must be at least 2, got {num_classes}")
    low, high = object_count_range
    if low < 0 or high < low:
        raise ConfigurationError(f"invalid object_count_range {object_count_range}")

    rng = rng_for(seed, Stream.SCENE)
    count = int(rng.integers(low, high + 1))
    min_extent, max_extent = object_extent_range
    objects = []
    for _ in range(count):
        class_id = int(rng.integers(1, num_classes))
        shape: Shape = "rectangle" if rng.random() < 0.5 else "ellipse"
        center = (float(rng.uniform(0, size)), float(rng.uniform(0, size)))
        extent = (float(rng.uniform(min_extent, max_extent)) / 2, float(rng.uniform(min_extent, max_extent)) / 2)
        level = class_id // len(config.OPTICAL_PALETTE)
        height = level * config.HEIGHT_LEVEL_STEP + float(rng.uniform(0.5, 1.5))
        objects.append(SceneObject(shape, class_id, center, extent, height))
    return LatentScene(seed=seed, size=size, num_classes=num_classes, objects=objects)


def _edge_response(raster: np.ndarray) -> np.ndarray:
    gy = ndimage.sobel(raster, axis=0, mode="nearest")
    gx = ndimage.sobel(raster, axis=1, mode="nearest")
    return np.hypot(gx, gy) / 8.0


def render_sample(scene: LatentScene, noise: NoiseConfig = NoiseConfig(), sample_id: str = "") -> Sample:
    """Render all modalities of a scene; noise settings are clamped to valid ranges."""
    noise = noise.clamped()
    rng = rng_for(scene.seed, Stream.RENDER)
    label, height = scene.rasterize()
    size = scene.size

    palette = np.asarray(config.OPTICAL_PALETTE, dtype=np.float64)
    colours = palette[label % len(palette)]
    optical = np.moveaxis(colours, -1, 0) + rng.normal(0.0, 1.0, (3, size, size)) * noise.optical_sigma

    roughness = np.asarray(config.SAR_ROUGHNESS, dtype=np.float64)[label % len(config.SAR_ROUGHNESS)]
    roughness[label == 0] = 0.0
    edges = np.stack([_edge_response(height), _edge_response(roughness)])
    if noise.sar_speckle_looks > 0:
        looks = noise.sar_speckle_looks
        speckle = rng.gamma(looks, 1.0 / looks, edges.shape)
    else:
        speckle = np.ones_like(edges)
    sar = edges * speckle + rng.normal(0.0, 1.0, edges.shape) * noise.sar_floor_sigma

    dem = height[None] + rng.normal(0.0, 1.0, (1, size, size)) * noise.dem_sigma

    flip = rng.random((size, size)) < noise.map_flip_fraction
    random_classes = rng.integers(0, scene.num_classes, (size, size))
    land_cover = np.where(flip, random_classes, label)

    return Sample(
        sample_id=sample_id or f"tile_{scene.seed:06d}",
        optical=optical.astype(np.float32),
        sar=sar.astype(np.float32),
        dem=dem.astype(np.float32),
        map=land_cover[None].astype(np.int32),
        label=label[None].astype(np.int32),
    )
