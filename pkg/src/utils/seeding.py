"""
Seeding and per-purpose random streams.
"""

import random
from enum import IntEnum
from typing import Optional

import numpy as np
import torch


class Stream(IntEnum):
    """Independent random streams, one per purpose."""

    SCENE = 0
    RENDER = 1
    SPLIT = 2
    INIT = 3
    DATA_ORDER = 4
    MASK_PLAN = 5
    SUBSET = 6
    EVAL = 7


def seed_everything(seed: int, workers: int = 1) -> None:
    """Seed global generators; with one worker also pin the reduction order."""
    random.seed(seed)
    np.random.seed(seed % (2**32))
    torch.manual_seed(seed)
    torch.set_num_threads(workers)
    if workers == 1:
        torch.use_deterministic_algorithms(True)


def rng_for(seed: int, stream: Stream, *keys: int) -> np.random.Generator:
    """numpy Generator for (seed, purpose, keys...), e.g. one per epoch."""
    return np.random.default_rng([seed, int(stream), *keys])


def derived_seed(seed: int, stream: Stream, key: Optional[int] = None) -> int:
    entropy = np.random.SeedSequence([seed, int(stream)] + ([key] if key is not None else []))
    return int(entropy.generate_state(1, dtype=np.uint32)[0])


def seed_torch(seed: int, stream: Stream = Stream.INIT, key: Optional[int] = None) -> None:
    """Re-seed torch's global generator from a derived stream (parameter init)."""
    torch.manual_seed(derived_seed(seed, stream, key))
