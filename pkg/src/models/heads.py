"""
Task heads on top of the readout: contrastive projections and the segmentation head.
"""

from typing import Dict, Sequence, Tuple

import torch
from torch import nn

from .encoder import ReadoutResult
from .tokenizer import unpatchify

FUSION_KEY = "fusion"


class ContrastiveHeads(nn.Module):
    """g_m for every modality plus g_f for the fusion vector, all into the same space."""

    def __init__(self, modalities: Sequence[str], dim: int, out_dim: int):
        super().__init__()
        self.modality_heads = nn.ModuleDict({name: nn.Linear(dim, out_dim) for name in modalities})
        self.fusion_head = nn.Linear(dim, out_dim)

    def forward(self, readout: ReadoutResult) -> Dict[str, torch.Tensor]:
        projected = {name: self.modality_heads[name](vector) for name, vector in readout.modality_vectors.items()}
        projected[FUSION_KEY] = self.fusion_head(readout.fusion_vector)
        return projected


class SegHead(nn.Module):
    """Linear per-token classifier: each fusion token predicts K logits for every pixel of its patch."""

    def __init__(self, dim: int, patch_size: int, num_classes: int, grid: Tuple[int, int]):
        super().__init__()
        self.patch_size = patch_size
        self.num_classes = num_classes
        self.grid = grid
        self.norm = nn.LayerNorm(dim)
        self.proj = nn.Linear(dim, patch_size * patch_size * num_classes)

    def forward(self, fusion_tokens: torch.Tensor) -> torch.Tensor:
        logits = self.proj(self.norm(fusion_tokens))
        return unpatchify(logits, self.patch_size, self.grid, self.num_classes)
