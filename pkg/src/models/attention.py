"""
Masked attention.

The binary mask m gates information flow: m[i, j] = 1 iff token i may read
token j. Modality tokens (and their class token) read only their own modality;
fusion tokens and the global class token read everything present.
"""

import math
from dataclasses import dataclass
from typing import Optional, Tuple

import torch
from einops import rearrange
from torch import nn

from ..utils.errors import ContractViolation
from .tokenizer import TokenLayout


@dataclass(frozen=True)
class AttentionMask:
    matrix: torch.Tensor
    layout: TokenLayout

    @property
    def size(self) -> int:
        return self.matrix.shape[-1]

    def rows(self, indices) -> torch.Tensor:
        index = torch.as_tensor(indices, dtype=torch.long, device=self.matrix.device)
        return self.matrix.index_select(0, index)


def build_attention_mask(layout: TokenLayout, isolate: bool = True) -> AttentionMask:
    """Block mask for a layout; ``isolate=False`` gives the all-ones (unmasked) variant."""
    size = layout.length
    if not isolate:
        return AttentionMask(torch.ones(size, size, dtype=torch.bool), layout)

    matrix = torch.zeros(size, size, dtype=torch.bool)
    for name in layout.modalities:
        own = layout.span_indices(name)
        if name in layout.class_slots:
            own.append(layout.class_slots[name])
        if own:
            index = torch.as_tensor(own, dtype=torch.long)
            matrix[index.unsqueeze(1), index.unsqueeze(0)] = True
    readers = layout.fusion_indices()
    if layout.global_slot is not None:
        readers.append(layout.global_slot)
    if readers:
        matrix[torch.as_tensor(readers, dtype=torch.long)] = True
    return AttentionMask(matrix, layout)


def masked_softmax(logits: torch.Tensor, mask: torch.Tensor) -> torch.Tensor:
    """Softmax over permitted entries only; masked weights are exactly zero.

    The row maximum is taken over permitted entries before exponentiation.
    A row with no permitted entry has no defined normalisation and is an error.
    """
    mask = mask.to(torch.bool)
    if not torch.all(mask.any(dim=-1)):
        raise ContractViolation("attention mask has a row with no permitted key")
    masked = logits.masked_fill(~mask, float("-inf"))
    row_max = masked.amax(dim=-1, keepdim=True).detach()
    weights = torch.exp(masked - row_max)
    return weights / weights.sum(dim=-1, keepdim=True)


def masked_attention(q: torch.Tensor, k: torch.Tensor, v: torch.Tensor,
                     mask: Optional[torch.Tensor] = None) -> Tuple[torch.Tensor, torch.Tensor]:
    """o_i = sum_j a_ij v_j with a = masked_softmax(q k^T / sqrt(d)); returns (o, a)."""
    logits = q @ k.transpose(-2, -1) / math.sqrt(q.shape[-1])
    if mask is None:
        mask = torch.ones(logits.shape[-2:], dtype=torch.bool, device=logits.device)
    if mask.shape[-2:] != logits.shape[-2:]:
        raise ContractViolation(f"mask shape {tuple(mask.shape)} does not match attention {tuple(logits.shape[-2:])}")
    weights = masked_softmax(logits, mask)
    return weights @ v, weights


class MaskedMultiheadAttention(nn.Module):
    """Multi-head attention with a shared binary mask; cross-attends when ``context`` is given."""

    def __init__(self, dim: int, heads: int):
        super().__init__()
        if dim % heads:
            raise ContractViolation(f"heads ({heads}) must divide dim ({dim})")
        self.heads = heads
        self.q = nn.Linear(dim, dim)
        self.kv = nn.Linear(dim, 2 * dim)
        self.proj = nn.Linear(dim, dim)

    def forward(self, x: torch.Tensor, mask: Optional[torch.Tensor] = None,
                context: Optional[torch.Tensor] = None) -> torch.Tensor:
        context = x if context is None else context
        q = rearrange(self.q(x), "b t (h d) -> b h t d", h=self.heads)
        k, v = rearrange(self.kv(context), "b t (two h d) -> two b h t d", two=2, h=self.heads)
        out, _ = masked_attention(q, k, v, mask)
        return self.proj(rearrange(out, "b h t d -> b t (h d)"))


class Mlp(nn.Module):
    def __init__(self, dim: int, hidden: int):
        super().__init__()
        self.fc1 = nn.Linear(dim, hidden)
        self.act = nn.GELU()
        self.fc2 = nn.Linear(hidden, dim)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return self.fc2(self.act(self.fc1(x)))


class Block(nn.Module):
    """Pre-norm Transformer block with masked self-attention."""

    def __init__(self, dim: int, heads: int, mlp_ratio: float = 4.0):
        super().__init__()
        self.norm1 = nn.LayerNorm(dim)
        self.attn = MaskedMultiheadAttention(dim, heads)
        self.norm2 = nn.LayerNorm(dim)
        self.mlp = Mlp(dim, int(dim * mlp_ratio))

    def forward(self, x: torch.Tensor, mask: Optional[torch.Tensor] = None) -> torch.Tensor:
        x = x + self.attn(self.norm1(x), mask)
        return x + self.mlp(self.norm2(x))
