"""
Modality subsets: the random-combination sampler and the evaluation ordering.
"""

from dataclasses import dataclass
from itertools import combinations
from typing import List, Sequence, Tuple

import numpy as np

from ..models.tokenizer import canonical_order
from ..utils.errors import ContractViolation

Subset = Tuple[str, ...]


def all_subsets(universe: Sequence[str]) -> List[Subset]:
    """Every non-empty subset: full set first, then triples, pairs and singles."""
    names = canonical_order(universe)
    if not names:
        raise ContractViolation("modality universe must not be empty")
    return [combo for size in range(len(names), 0, -1) for combo in combinations(names, size)]


def subset_label(subset: Sequence[str]) -> str:
    return "+".join(canonical_order(subset))


def parse_subset(label: str) -> Subset:
    return tuple(canonical_order(label.split("+")))


@dataclass
class SubsetSampler:
    """Uniform over the 2^M - 1 non-empty subsets, or always the full set when ``random`` is off."""

    universe: Tuple[str, ...]
    random: bool = True

    def __post_init__(self):
        self.universe = tuple(canonical_order(self.universe))
        self.subsets = all_subsets(self.universe)

    def sample_subset(self, rng: np.random.Generator) -> Subset:
        if not self.random:
            return self.universe
        return self.subsets[int(rng.integers(len(self.subsets)))]
