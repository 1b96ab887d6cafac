"""
Dirichlet token masking for pretraining.

A plan splits a fixed visible-token budget across the present modalities in
proportions drawn from a symmetric Dirichlet, then picks that many visible
patches uniformly (without replacement) inside each modality. Fusion and class
tokens are never masked.
"""

from dataclasses import dataclass
from typing import Dict, Mapping, Optional, Sequence, Tuple

import numpy as np
import torch

from ..models.tokenizer import TokenLayout, canonical_order, select_tokens
from ..utils.errors import ConfigurationError, ContractViolation


@dataclass(frozen=True)
class MaskPlan:
    alpha: float
    budget: int
    proportions: Dict[str, float]
    visible: Dict[str, Tuple[int, ...]]
    masked: Dict[str, Tuple[int, ...]]

    @property
    def visible_counts(self) -> Dict[str, int]:
        return {name: len(cells) for name, cells in self.visible.items()}

    @property
    def masked_fraction(self) -> float:
        """p_m: share of modality tokens hidden from the encoder."""
        total = sum(len(self.visible[m]) + len(self.masked[m]) for m in self.visible)
        return 1.0 - self.budget / total if total else 0.0

    def masked_patches(self, name: str, num_patches: int) -> torch.Tensor:
        """(L,) bool, True where the patch is a reconstruction target.

        A modality the plan does not cover was absent from the input, so all of
        its patches are targets.
        """
        flags = torch.ones(num_patches, dtype=torch.bool)
        if name in self.visible:
            flags[list(self.visible[name])] = False
        return flags


def allocate_budget(proportions: Sequence[float], budget: int, capacity: Sequence[int]) -> np.ndarray:
    """Largest-remainder rounding of ``proportions * budget``, capped by ``capacity``.

    Overflow above a modality's capacity moves to the modalities with the
    largest remaining proportion that still have room, so counts always sum to
    ``budget``.
    """
    proportions = np.asarray(proportions, dtype=np.float64)
    capacity = np.asarray(capacity, dtype=np.int64)
    if budget > capacity.sum():
        raise ConfigurationError(f"budget {budget} exceeds the {int(capacity.sum())} available tokens")
    raw = proportions * budget
    counts = np.floor(raw).astype(np.int64)
    remainder = budget - counts.sum()
    # stable sort keeps ties in canonical order
    for index in np.argsort(-(raw - counts), kind="stable")[:remainder]:
        counts[index] += 1

    overflow = int(np.maximum(counts - capacity, 0).sum())
    counts = np.minimum(counts, capacity)
    order = np.argsort(-proportions, kind="stable")
    while overflow:
        for index in order:
            if overflow and counts[index] < capacity[index]:
                counts[index] += 1
                overflow -= 1
    return counts


def sample_mask_plan(rng: np.random.Generator, alpha: float, budget: int,
                     token_counts: Mapping[str, int],
                     proportions: Optional[Mapping[str, float]] = None) -> MaskPlan:
    """Draw lambda ~ Dir(alpha) over the present modalities and choose visible patches.

    ``proportions`` fixes lambda instead of drawing it.
    """
    if alpha <= 0:
        raise ConfigurationError(f"alpha must be positive, got {alpha}")
    names = canonical_order(token_counts.keys())
    if not names:
        raise ContractViolation("mask plan needs at least one modality")
    capacity = [int(token_counts[n]) for n in names]
    if budget < 0 or budget > sum(capacity):
        raise ConfigurationError(f"budget {budget} is outside [0, {sum(capacity)}]")

    if proportions is None:
        lam = rng.dirichlet(np.full(len(names), alpha))
    else:
        lam = np.asarray([float(proportions.get(n, 0.0)) for n in names])
        if np.any(lam < 0) or not np.isclose(lam.sum(), 1.0):
            raise ContractViolation(f"proportions must lie on the simplex, got {dict(zip(names, lam))}")

    counts = allocate_budget(lam, budget, capacity)
    visible, masked = {}, {}
    for name, count, total in zip(names, counts, capacity):
        chosen = np.sort(rng.choice(total, size=int(count), replace=False))
        visible[name] = tuple(int(c) for c in chosen)
        masked[name] = tuple(int(c) for c in np.setdiff1d(np.arange(total), chosen))
    return MaskPlan(alpha, budget, dict(zip(names, lam.tolist())), visible, masked)


def apply_mask_plan(sequence: torch.Tensor, layout: TokenLayout, plan: MaskPlan) -> Tuple[torch.Tensor, TokenLayout]:
    """Drop masked modality tokens from the encoder input (fusion and class tokens stay)."""
    stray = set(plan.visible).difference(layout.modalities)
    if stray:
        raise ContractViolation(f"mask plan covers modalities {sorted(stray)} that are not in the sequence")
    return select_tokens(sequence, layout, plan.visible)
