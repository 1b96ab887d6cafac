"""
Fusion Transformer encoder and readout.
"""

from dataclasses import dataclass
from typing import Dict, List, Mapping, Optional, Sequence, Tuple, Union

import torch
from torch import nn

import config
from ..utils.errors import ContractViolation
from .attention import AttentionMask, Block, MaskedMultiheadAttention, Mlp, build_attention_mask
from .fusion import BiLSTMFusion
from .tokenizer import TokenLayout, Tokenizer, select_tokens


@dataclass
class ReadoutResult:
    """One vector per present modality, the global fusion vector and the fusion spatial tokens."""

    modality_vectors: Dict[str, torch.Tensor]
    fusion_vector: torch.Tensor
    fusion_tokens: torch.Tensor


class FusionEncoder(nn.Module):
    """Bi-LSTM fusion block, ``depth`` masked Transformer layers and a masked cross-attention readout.

    ``use_lstm=False`` skips the Bi-LSTM block and ``isolate=False`` replaces the
    block mask by an all-ones mask; both exist for the ablations.
    """

    def __init__(self, dim: int = 64, depth: int = 4, heads: int = 4, mlp_ratio: float = 4.0,
                 use_lstm: bool = True, isolate: bool = True):
        super().__init__()
        self.dim = dim
        self.use_lstm = use_lstm
        self.isolate = isolate
        self.fusion_block = BiLSTMFusion(dim)
        self.blocks = nn.ModuleList([Block(dim, heads, mlp_ratio) for _ in range(depth)])
        self.norm = nn.LayerNorm(dim)
        self.query_norm = nn.LayerNorm(dim)
        self.readout_attn = MaskedMultiheadAttention(dim, heads)
        self.readout_norm = nn.LayerNorm(dim)
        self.readout_mlp = Mlp(dim, int(dim * mlp_ratio))

    def attention_mask(self, layout: TokenLayout) -> AttentionMask:
        return build_attention_mask(layout, isolate=self.isolate)

    def encode(self, sequence: torch.Tensor, layout: TokenLayout,
               return_hidden: bool = False) -> Union[torch.Tensor, Tuple[torch.Tensor, List[torch.Tensor]]]:
        if sequence.shape[1] != layout.length:
            raise ContractViolation(f"sequence length {sequence.shape[1]} does not match layout length {layout.length}")
        mask = self.attention_mask(layout).matrix.to(sequence.device)
        x = self.fusion_block(sequence, layout) if self.use_lstm else sequence
        hidden = [x]
        for block in self.blocks:
            x = block(x, mask)
            hidden.append(x)
        return (x, hidden) if return_hidden else x

    def readout(self, encoded: torch.Tensor, layout: TokenLayout) -> ReadoutResult:
        """Class and fusion tokens query the final layer under the same mask as the encoder."""
        mask = self.attention_mask(layout)
        queries = [layout.class_slots[m] for m in layout.modalities]
        if layout.global_slot is None:
            raise ContractViolation("readout needs a layout with class tokens")
        queries.append(layout.global_slot)
        queries.extend(layout.fusion_indices())

        index = torch.as_tensor(queries, dtype=torch.long, device=encoded.device)
        context = self.norm(encoded)
        out = self.readout_attn(self.query_norm(encoded.index_select(1, index)), mask.rows(queries).to(encoded.device), context)
        out = out + self.readout_mlp(self.readout_norm(out))

        count = len(layout.modalities)
        return ReadoutResult(
            modality_vectors={name: out[:, i] for i, name in enumerate(layout.modalities)},
            fusion_vector=out[:, count],
            fusion_tokens=out[:, count + 1:],
        )

    def forward(self, sequence: torch.Tensor, layout: TokenLayout) -> ReadoutResult:
        return self.readout(self.encode(sequence, layout), layout)


class FusionBackbone(nn.Module):
    """Tokenizer plus encoder: rasters of any modality subset in, ReadoutResult out."""

    def __init__(self,
                 modalities: Sequence[str] = config.MODALITIES,
                 tile_size: int = config.DEFAULT_TILE_SIZE,
                 patch_size: int = config.DEFAULT_PATCH_SIZE,
                 dim: int = 64,
                 depth: int = 4,
                 heads: int = 4,
                 mlp_ratio: float = 4.0,
                 num_classes: int = config.DEFAULT_NUM_CLASSES,
                 map_embed_dim: int = 16,
                 omega: float = 10000.0,
                 use_lstm: bool = True,
                 isolate: bool = True):
        super().__init__()
        self.tokenizer = Tokenizer(modalities, tile_size, patch_size, dim, num_classes, map_embed_dim, omega)
        self.encoder = FusionEncoder(dim, depth, heads, mlp_ratio, use_lstm=use_lstm, isolate=isolate)

    @classmethod
    def from_config(cls, model_config, data_config, use_lstm: bool = True, isolate: bool = True) -> "FusionBackbone":
        return cls(
            modalities=model_config.modalities,
            tile_size=data_config.tile_size,
            patch_size=model_config.patch_size,
            dim=model_config.dim,
            depth=model_config.depth,
            heads=model_config.heads,
            mlp_ratio=model_config.mlp_ratio,
            num_classes=data_config.num_classes,
            map_embed_dim=model_config.map_embed_dim,
            omega=model_config.omega,
            use_lstm=use_lstm,
            isolate=isolate,
        )

    @property
    def modalities(self) -> Tuple[str, ...]:
        return self.tokenizer.modalities

    def forward(self, batch: Mapping[str, torch.Tensor], subset: Sequence[str],
                visible: Optional[Mapping[str, Sequence[int]]] = None) -> ReadoutResult:
        if not subset:
            raise ContractViolation("modality subset must not be empty")
        sequence, layout = self.tokenizer(batch, subset)
        if visible is not None:
            sequence, layout = select_tokens(sequence, layout, visible)
        return self.encoder(sequence, layout)
