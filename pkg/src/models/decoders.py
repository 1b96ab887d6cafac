"""
Per-modality reconstruction decoders.

Each decoder reads only the fusion spatial tokens: project to the decoder
width, add a learned modality embedding, run a few unmasked Transformer blocks
and predict pixels (or class logits for the map) per patch. There are no
positional embeddings and no cross-attention inside a decoder.
"""

from typing import Dict, Optional, Sequence, Tuple

import torch
from torch import nn

import config
from .attention import Block
from .tokenizer import unpatchify


class ModalityDecoder(nn.Module):
    def __init__(self,
                 modality: str,
                 dim: int,
                 decoder_dim: int,
                 depth: int,
                 heads: int,
                 patch_size: int,
                 grid: Tuple[int, int],
                 num_classes: Optional[int] = None,
                 mlp_ratio: float = 4.0):
        super().__init__()
        self.modality = modality
        self.patch_size = patch_size
        self.grid = grid
        # the map is reconstructed as K class logits per pixel
        self.out_channels = num_classes if num_classes is not None else config.MODALITY_CHANNELS[modality]
        self.decoder_embed = nn.Linear(dim, decoder_dim)
        self.modality_embed = nn.Parameter(torch.zeros(decoder_dim))
        self.decoder_blocks = nn.ModuleList([Block(decoder_dim, heads, mlp_ratio) for _ in range(depth)])
        self.decoder_norm = nn.LayerNorm(decoder_dim)
        self.decoder_pred = nn.Linear(decoder_dim, patch_size * patch_size * self.out_channels)
        nn.init.trunc_normal_(self.modality_embed, std=0.02)

    def forward(self, fusion_tokens: torch.Tensor) -> torch.Tensor:
        x = self.decoder_embed(fusion_tokens) + self.modality_embed
        for block in self.decoder_blocks:
            x = block(x)
        patches = self.decoder_pred(self.decoder_norm(x))
        return unpatchify(patches, self.patch_size, self.grid, self.out_channels)


def decode_modality(fusion_tokens: torch.Tensor, decoder: ModalityDecoder) -> torch.Tensor:
    """(B, L, D) fusion tokens -> (B, C, H, W) reconstruction (C = K logits for the map)."""
    return decoder(fusion_tokens)


def build_decoders(modalities: Sequence[str], dim: int, decoder_dim: int, depth: int, heads: int,
                   patch_size: int, grid: Tuple[int, int], num_classes: int) -> nn.ModuleDict:
    return nn.ModuleDict({
        name: ModalityDecoder(
            name, dim, decoder_dim, depth, heads, patch_size, grid,
            num_classes=num_classes if name == "map" else None,
        )
        for name in modalities
    })


def reconstruct(fusion_tokens: torch.Tensor, decoders: nn.ModuleDict) -> Dict[str, torch.Tensor]:
    return {name: decode_modality(fusion_tokens, decoder) for name, decoder in decoders.items()}
