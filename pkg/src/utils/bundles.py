"""
Tensor bundle container.

A bundle is a directory holding a plain-text JSON manifest plus one raw
little-endian, C-order binary blob per array. Samples, checkpoints and
confusion matrices all use it.
"""

import json
import logging
import os
from pathlib import Path
from typing import Any, Dict, Mapping, Optional, Tuple

import numpy as np

from .errors import ContainerError

logger = logging.getLogger(__name__)

MANIFEST_NAME = "manifest.json"
BUNDLE_FORMAT = "imfusion-bundle"
BUNDLE_VERSION = 1

# dtypes a bundle may hold, stored explicitly little-endian
_ALLOWED_DTYPES = {
    "float32": "<f4",
    "float64": "<f8",
    "int32": "<i4",
    "int64": "<i8",
    "uint8": "|u1",
    "bool": "|b1",
}


def _file_name(name: str) -> str:
    return name.replace("/", "__") + ".bin"


def write_bundle(directory: Path, arrays: Mapping[str, np.ndarray], meta: Optional[Dict[str, Any]] = None) -> Path:
    """Write arrays and metadata; the manifest is written last and atomically."""
    directory = Path(directory)
    try:
        directory.mkdir(parents=True, exist_ok=True)
        entries = []
        for name, array in arrays.items():
            array = np.asarray(array)
            dtype_name = array.dtype.name
            if dtype_name not in _ALLOWED_DTYPES:
                raise ContainerError(f"unsupported dtype {dtype_name} for '{name}'", name=name)
            file_name = _file_name(name)
            data = np.ascontiguousarray(array, dtype=np.dtype(_ALLOWED_DTYPES[dtype_name]))
            (directory / file_name).write_bytes(data.tobytes(order="C"))
            entries.append({
                "name": name,
                "file": file_name,
                "shape": list(array.shape),
                "dtype": dtype_name,
            })

        manifest = {
            "format": BUNDLE_FORMAT,
            "version": BUNDLE_VERSION,
            "entries": entries,
            "meta": meta or {},
        }
        tmp_path = directory / (MANIFEST_NAME + ".tmp")
        tmp_path.write_text(json.dumps(manifest, indent=2, sort_keys=True))
        os.replace(tmp_path, directory / MANIFEST_NAME)
    except OSError as e:
        if isinstance(e, ContainerError):
            raise
        raise ContainerError(f"could not write bundle {directory}: {e}") from e
    return directory


def read_manifest(directory: Path) -> Dict[str, Any]:
    path = Path(directory) / MANIFEST_NAME
    if not path.exists():
        raise ContainerError(f"missing manifest: {path}", name=MANIFEST_NAME)
    try:
        manifest = json.loads(path.read_text())
    except json.JSONDecodeError as e:
        raise ContainerError(f"corrupt manifest {path}: {e}", name=MANIFEST_NAME) from e
    if manifest.get("format") != BUNDLE_FORMAT:
        raise ContainerError(f"{path} is not a {BUNDLE_FORMAT} manifest", name=MANIFEST_NAME)
    return manifest


def read_bundle(directory: Path) -> Tuple[Dict[str, np.ndarray], Dict[str, Any]]:
    """Read every array named in the manifest, checking file presence and shape."""
    directory = Path(directory)
    manifest = read_manifest(directory)
    arrays: Dict[str, np.ndarray] = {}
    for entry in manifest["entries"]:
        name = entry["name"]
        path = directory / entry["file"]
        if not path.exists():
            raise ContainerError(f"missing file for '{name}': {path}", name=name)
        dtype = np.dtype(_ALLOWED_DTYPES[entry["dtype"]])
        flat = np.fromfile(path, dtype=dtype)
        shape = tuple(entry["shape"])
        expected = int(np.prod(shape)) if shape else 1
        if flat.size != expected:
            raise ContainerError(
                f"shape mismatch for '{name}': manifest declares {list(shape)} "
                f"({expected} values) but {path.name} holds {flat.size}",
                name=name,
            )
        arrays[name] = flat.reshape(shape).astype(dtype.newbyteorder("="), copy=False)
    logger.debug("Read bundle %s (%d arrays)", directory, len(arrays))
    return arrays, manifest.get("meta", {})
