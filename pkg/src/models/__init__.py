"""
Network components: tokenizer, masked encoder, decoders and heads.
"""

from .attention import AttentionMask, Block, MaskedMultiheadAttention, build_attention_mask, masked_attention, masked_softmax
from .decoders import ModalityDecoder, build_decoders, decode_modality, reconstruct
from .encoder import FusionBackbone, FusionEncoder, ReadoutResult
from .fusion import BiLSTMFusion, bilstm_fusion_attention
from .heads import FUSION_KEY, ContrastiveHeads, SegHead
from .tokenizer import (
    ModalityEmbedder,
    PatchGrid,
    TokenLayout,
    Tokenizer,
    assemble_sequence,
    canonical_order,
    embed_modality,
    patchify,
    position_encoding,
    select_tokens,
    sincos_2d,
    unpatchify,
)

__all__ = [
    "AttentionMask",
    "BiLSTMFusion",
    "Block",
    "ContrastiveHeads",
    "FUSION_KEY",
    "FusionBackbone",
    "FusionEncoder",
    "MaskedMultiheadAttention",
    "ModalityDecoder",
    "ModalityEmbedder",
    "PatchGrid",
    "ReadoutResult",
    "SegHead",
    "TokenLayout",
    "Tokenizer",
    "assemble_sequence",
    "bilstm_fusion_attention",
    "build_attention_mask",
    "build_decoders",
    "canonical_order",
    "decode_modality",
    "embed_modality",
    "masked_attention",
    "masked_softmax",
    "patchify",
    "position_encoding",
    "reconstruct",
    "select_tokens",
    "sincos_2d",
    "unpatchify",
]
