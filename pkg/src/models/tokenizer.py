"""
Tokenizer

Turns modality rasters into one token sequence:

    [optical span][sar span][dem span][map span][fusion span][class tokens...][global class token]

Spans follow the canonical modality order whatever subset is requested.
Every spatial token, fusion tokens included, receives the same 2-D sine-cosine
encoding for its grid cell; class tokens get none.
"""

import math
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Mapping, Optional, Sequence, Tuple

import torch
from einops import rearrange
from torch import nn

import config
from ..utils.errors import ConfigurationError, ContractViolation


@dataclass(frozen=True)
class PatchGrid:
    patches: torch.Tensor
    patch_size: int
    grid: Tuple[int, int]
    channels: int

    @property
    def num_patches(self) -> int:
        return self.grid[0] * self.grid[1]


def patchify(raster: torch.Tensor, patch_size: int) -> PatchGrid:
    """Non-overlapping patches in row-major order: (..., C, H, W) -> (..., L, P*P*C)."""
    channels, height, width = raster.shape[-3:]
    if height % patch_size or width % patch_size:
        raise ConfigurationError(f"raster {height}x{width} is not divisible by patch size {patch_size}")
    patches = rearrange(raster, "... c (h p1) (w p2) -> ... (h w) (p1 p2 c)", p1=patch_size, p2=patch_size)
    return PatchGrid(patches, patch_size, (height // patch_size, width // patch_size), channels)


def unpatchify(patches: torch.Tensor, patch_size: int, grid: Tuple[int, int], channels: int) -> torch.Tensor:
    return rearrange(
        patches, "... (h w) (p1 p2 c) -> ... c (h p1) (w p2)",
        h=grid[0], w=grid[1], p1=patch_size, p2=patch_size, c=channels,
    )


def position_encoding(k: float, d_enc: int, omega: float = 10000.0, dtype: torch.dtype = torch.float64) -> torch.Tensor:
    """Interleaved sinusoid: [2i] = sin(k / omega^(2i/d_enc)), [2i+1] = cos(...)."""
    if d_enc % 2:
        raise ConfigurationError(f"encoding dimension must be even, got {d_enc}")
    if omega <= 0:
        raise ConfigurationError(f"omega must be positive, got {omega}")
    exponents = torch.arange(0, d_enc, 2, dtype=torch.float64) / d_enc
    angles = torch.as_tensor(k, dtype=torch.float64) / omega ** exponents
    encoding = torch.stack([torch.sin(angles), torch.cos(angles)], dim=-1).reshape(*angles.shape[:-1], d_enc)
    return encoding.to(dtype)


def sincos_2d(grid: Tuple[int, int], dim: int, omega: float = 10000.0) -> torch.Tensor:
    """(L, dim) table: column (x) encoding in the first half, row (y) encoding in the second."""
    if dim % 4:
        raise ConfigurationError(f"2-D sincos needs dim divisible by 4, got {dim}")
    rows, cols = torch.meshgrid(torch.arange(grid[0]), torch.arange(grid[1]), indexing="ij")
    half = dim // 2
    x = position_encoding(cols.reshape(-1, 1).double(), half, omega)
    y = position_encoding(rows.reshape(-1, 1).double(), half, omega)
    return torch.cat([x, y], dim=-1).float()


class ModalityEmbedder(nn.Module):
    """Per-modality patch projection; categorical modalities go through a class-embedding table first."""

    def __init__(self, name: str, channels: int, patch_size: int, dim: int,
                 num_classes: Optional[int] = None, embed_dim: Optional[int] = None):
        super().__init__()
        self.name = name
        self.patch_size = patch_size
        self.categorical = num_classes is not None
        if self.categorical:
            self.class_embed = nn.Embedding(num_classes, embed_dim)
            self.in_features = patch_size * patch_size * channels
            self.proj = nn.Linear(self.in_features * embed_dim, dim)
        else:
            self.in_features = patch_size * patch_size * channels
            self.proj = nn.Linear(self.in_features, dim)

    def forward(self, patches: torch.Tensor) -> torch.Tensor:
        if patches.shape[-1] != self.in_features:
            raise ContractViolation(
                f"{self.name}: patch width {patches.shape[-1]} does not match embedder input {self.in_features}"
            )
        if self.categorical:
            num_classes = self.class_embed.num_embeddings
            if patches.min() < 0 or patches.max() >= num_classes:
                raise ContractViolation(f"{self.name}: class ids outside [0, {num_classes})")
            patches = self.class_embed(patches.long()).flatten(-2)
        return self.proj(patches)


def embed_modality(patches: torch.Tensor, embedder: ModalityEmbedder) -> torch.Tensor:
    return embedder(patches)


@dataclass(frozen=True)
class TokenLayout:
    """Where every token of an assembled sequence lives.

    ``patch_index[m]`` lists the grid cell of each token in the span of modality
    ``m``; after masking a span may hold only some cells, or none.
    """

    modalities: Tuple[str, ...]
    spans: Dict[str, Tuple[int, int]]
    patch_index: Dict[str, Tuple[int, ...]]
    fusion_span: Tuple[int, int]
    class_slots: Dict[str, int] = field(default_factory=dict)
    global_slot: Optional[int] = None
    grid: Tuple[int, int] = (0, 0)

    @classmethod
    def build(cls, patch_index: Mapping[str, Iterable[int]], num_fusion: int,
              grid: Optional[Tuple[int, int]] = None, class_tokens: bool = True) -> "TokenLayout":
        order = canonical_order(patch_index.keys())
        cursor = 0
        spans, cells = {}, {}
        for name in order:
            cells[name] = tuple(int(p) for p in patch_index[name])
            spans[name] = (cursor, len(cells[name]))
            cursor += len(cells[name])
        fusion_span = (cursor, num_fusion)
        cursor += num_fusion
        class_slots, global_slot = {}, None
        if class_tokens:
            for name in order:
                class_slots[name] = cursor
                cursor += 1
            global_slot = cursor
        return cls(
            modalities=tuple(order),
            spans=spans,
            patch_index=cells,
            fusion_span=fusion_span,
            class_slots=class_slots,
            global_slot=global_slot,
            grid=grid or (1, num_fusion),
        )

    @property
    def length(self) -> int:
        end = self.fusion_span[0] + self.fusion_span[1]
        if self.global_slot is not None:
            end = self.global_slot + 1
        return end

    @property
    def num_patches(self) -> int:
        return self.fusion_span[1]

    def span_indices(self, name: str) -> List[int]:
        start, length = self.spans[name]
        return list(range(start, start + length))

    def fusion_indices(self) -> List[int]:
        start, length = self.fusion_span
        return list(range(start, start + length))

    def class_indices(self) -> List[int]:
        slots = [self.class_slots[m] for m in self.modalities if m in self.class_slots]
        if self.global_slot is not None:
            slots.append(self.global_slot)
        return slots

    def positions(self, name: str) -> List[Tuple[int, int]]:
        """(row, col) of each spatial token of a modality span."""
        width = self.grid[1]
        return [divmod(p, width) for p in self.patch_index[name]]

    def select(self, visible: Mapping[str, Sequence[int]]) -> Tuple[List[int], "TokenLayout"]:
        """Keep only the listed grid cells of each modality span.

        Returns the sequence indices to gather (in order) and the layout of the
        gathered sequence. Fusion and class tokens are always kept.
        """
        keep: List[int] = []
        cells: Dict[str, List[int]] = {}
        for name in self.modalities:
            start, length = self.spans[name]
            wanted = set(int(p) for p in visible.get(name, self.patch_index[name]))
            own = self.patch_index[name]
            stray = wanted.difference(own)
            if stray:
                raise ContractViolation(f"{name}: cells {sorted(stray)} are not in the span")
            cells[name] = []
            for offset, cell in enumerate(own):
                if cell in wanted:
                    keep.append(start + offset)
                    cells[name].append(cell)
        keep.extend(self.fusion_indices())
        keep.extend(self.class_indices())
        layout = TokenLayout.build(cells, self.num_patches, self.grid, class_tokens=self.global_slot is not None)
        return keep, layout


def canonical_order(names: Iterable[str]) -> List[str]:
    names = list(dict.fromkeys(names))
    unknown = [n for n in names if n not in config.MODALITIES]
    if unknown:
        raise ContractViolation(f"unknown modalities {unknown}")
    return [m for m in config.MODALITIES if m in names]


def assemble_sequence(embedded: Mapping[str, torch.Tensor],
                      fusion_tokens: torch.Tensor,
                      pos_embed: torch.Tensor,
                      class_tokens: Optional[Mapping[str, torch.Tensor]] = None,
                      global_token: Optional[torch.Tensor] = None,
                      grid: Optional[Tuple[int, int]] = None) -> Tuple[torch.Tensor, TokenLayout]:
    """Concatenate modality tokens, fusion tokens and class tokens in canonical order.

    ``embedded`` maps modality -> (B, L, D) tokens without positional encoding;
    ``fusion_tokens`` and ``pos_embed`` are (L, D).
    """
    if not embedded:
        raise ContractViolation("at least one modality must be present")
    order = canonical_order(embedded.keys())
    batch, num_patches, dim = embedded[order[0]].shape
    pos = pos_embed.to(embedded[order[0]].dtype)

    parts = [embedded[name] + pos for name in order]
    parts.append((fusion_tokens + pos).expand(batch, num_patches, dim))
    with_class = class_tokens is not None
    if with_class:
        for name in order:
            parts.append(class_tokens[name].reshape(1, 1, dim).expand(batch, 1, dim))
        parts.append(global_token.reshape(1, 1, dim).expand(batch, 1, dim))

    layout = TokenLayout.build({name: range(num_patches) for name in order}, num_patches, grid, class_tokens=with_class)
    return torch.cat(parts, dim=1), layout


def select_tokens(sequence: torch.Tensor, layout: TokenLayout,
                  visible: Mapping[str, Sequence[int]]) -> Tuple[torch.Tensor, TokenLayout]:
    keep, visible_layout = layout.select(visible)
    index = torch.as_tensor(keep, dtype=torch.long, device=sequence.device)
    return sequence.index_select(1, index), visible_layout


class Tokenizer(nn.Module):
    """Embedders, learned fusion tokens and class tokens for a modality universe."""

    def __init__(self,
                 modalities: Sequence[str] = config.MODALITIES,
                 tile_size: int = config.DEFAULT_TILE_SIZE,
                 patch_size: int = config.DEFAULT_PATCH_SIZE,
                 dim: int = 64,
                 num_classes: int = config.DEFAULT_NUM_CLASSES,
                 map_embed_dim: int = 16,
                 omega: float = 10000.0):
        super().__init__()
        if tile_size % patch_size:
            raise ConfigurationError(f"tile size {tile_size} is not divisible by patch size {patch_size}")
        self.modalities = tuple(canonical_order(modalities))
        self.patch_size = patch_size
        self.grid = (tile_size // patch_size, tile_size // patch_size)
        self.num_patches = self.grid[0] * self.grid[1]
        self.dim = dim

        self.embedders = nn.ModuleDict({
            name: ModalityEmbedder(
                name,
                config.MODALITY_CHANNELS[name],
                patch_size,
                dim,
                num_classes=num_classes if name == "map" else None,
                embed_dim=map_embed_dim if name == "map" else None,
            )
            for name in self.modalities
        })
        self.fusion_tokens = nn.Parameter(torch.zeros(self.num_patches, dim))
        self.class_tokens = nn.ParameterDict({name: nn.Parameter(torch.zeros(dim)) for name in self.modalities})
        self.global_token = nn.Parameter(torch.zeros(dim))
        self.register_buffer("pos_embed", sincos_2d(self.grid, dim, omega), persistent=False)

        nn.init.trunc_normal_(self.fusion_tokens, std=0.02)
        nn.init.trunc_normal_(self.global_token, std=0.02)
        for token in self.class_tokens.values():
            nn.init.trunc_normal_(token, std=0.02)

    def embed(self, batch: Mapping[str, torch.Tensor], subset: Sequence[str]) -> Dict[str, torch.Tensor]:
        embedded = {}
        for name in canonical_order(subset):
            if name not in self.embedders:
                raise ContractViolation(f"modality '{name}' is not part of this model")
            if name not in batch:
                raise ContractViolation(f"modality '{name}' is missing from the input")
            grid = patchify(batch[name], self.patch_size)
            if grid.grid != self.grid:
                raise ContractViolation(f"{name}: patch grid {grid.grid} does not match model grid {self.grid}")
            embedded[name] = embed_modality(grid.patches, self.embedders[name])
        return embedded

    def forward(self, batch: Mapping[str, torch.Tensor], subset: Sequence[str]) -> Tuple[torch.Tensor, TokenLayout]:
        embedded = self.embed(batch, subset)
        return assemble_sequence(
            embedded,
            self.fusion_tokens,
            self.pos_embed,
            class_tokens={name: self.class_tokens[name] for name in embedded},
            global_token=self.global_token,
            grid=self.grid,
        )
