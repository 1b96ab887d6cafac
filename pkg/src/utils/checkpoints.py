"""
Model and optimizer checkpoints stored as tensor bundles.

Parameters are stored under ``model/<state-dict key>``; optimizer moments under
``optim/<param index>/<key>`` with the JSON-safe part of the optimizer state
(param groups) kept in the manifest meta.
"""

import hashlib
import logging
from pathlib import Path
from typing import Any, Dict, Optional

import numpy as np
import torch
from torch import nn

from .bundles import read_bundle, write_bundle
from .errors import ContainerError

logger = logging.getLogger(__name__)

MODEL_PREFIX = "model/"
OPTIM_PREFIX = "optim/"


def _to_numpy(tensor: torch.Tensor) -> np.ndarray:
    return tensor.detach().cpu().contiguous().numpy()


def save_checkpoint(directory: Path, model: nn.Module, optimizer: Optional[torch.optim.Optimizer] = None,
                    meta: Optional[Dict[str, Any]] = None) -> Path:
    arrays = {f"{MODEL_PREFIX}{key}": _to_numpy(value) for key, value in model.state_dict().items()}
    meta = dict(meta or {})
    if optimizer is not None:
        state = optimizer.state_dict()
        for index, slots in state["state"].items():
            for key, value in slots.items():
                arrays[f"{OPTIM_PREFIX}{index}/{key}"] = _to_numpy(torch.as_tensor(value))
        meta["param_groups"] = state["param_groups"]
    write_bundle(directory, arrays, meta)
    logger.info("Saved checkpoint %s (%d arrays)", directory, len(arrays))
    return Path(directory)


def load_state(directory: Path, prefix: str = "") -> Dict[str, torch.Tensor]:
    """State dict stored in a checkpoint, optionally restricted to keys under ``prefix``."""
    arrays, _ = read_bundle(directory)
    state = {}
    for name, array in arrays.items():
        if not name.startswith(MODEL_PREFIX):
            continue
        key = name[len(MODEL_PREFIX):]
        if key.startswith(prefix):
            state[key[len(prefix):]] = torch.from_numpy(np.array(array))
    if not state:
        raise ContainerError(f"checkpoint {directory} holds no parameters under '{prefix}'", name=prefix or "model")
    return state


def load_checkpoint(directory: Path, model: nn.Module, optimizer: Optional[torch.optim.Optimizer] = None,
                    prefix: str = "") -> Dict[str, Any]:
    """Load parameters (and optimizer state when given) in place; returns the checkpoint meta."""
    directory = Path(directory)
    if not directory.exists():
        raise ContainerError(f"checkpoint not found: {directory}", name="checkpoint")
    arrays, meta = read_bundle(directory)
    state = load_state(directory, prefix)
    missing, unexpected = model.load_state_dict(state, strict=False)
    if missing or unexpected:
        raise ContainerError(
            f"checkpoint {directory} does not match the model (missing {missing[:5]}, unexpected {unexpected[:5]})",
            name="checkpoint",
        )

    if optimizer is not None:
        if "param_groups" not in meta:
            raise ContainerError(f"checkpoint {directory} has no optimizer state", name="optimizer")
        slots: Dict[int, Dict[str, torch.Tensor]] = {}
        for name, array in arrays.items():
            if name.startswith(OPTIM_PREFIX):
                index, key = name[len(OPTIM_PREFIX):].split("/", 1)
                slots.setdefault(int(index), {})[key] = torch.from_numpy(np.array(array))
        optimizer.load_state_dict({"state": slots, "param_groups": meta["param_groups"]})
    return meta


def state_checksum(module: nn.Module) -> str:
    """sha256 over every state-dict key and the raw bytes of its tensor."""
    digest = hashlib.sha256()
    for key, tensor in module.state_dict().items():
        digest.update(key.encode())
        digest.update(tensor.detach().cpu().contiguous().numpy().tobytes())
    return digest.hexdigest()
