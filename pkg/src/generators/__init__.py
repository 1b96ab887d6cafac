"""
Generators package

Contains the synthetic scene generator, the on-disk sample container and
dataset splitting/loading.
"""

from .container import Sample, read_sample, validate_sample, write_sample
from .dataset import TileDataset, generate_dataset, load_split
from .scene import LatentScene, SceneObject, generate_scene, render_sample
from .splits import SplitManifest, make_splits

__all__ = [
    'Sample', 'read_sample', 'validate_sample', 'write_sample',
    'TileDataset', 'generate_dataset', 'load_split',
    'LatentScene', 'SceneObject', 'generate_scene', 'render_sample',
    'SplitManifest', 'make_splits',
]
