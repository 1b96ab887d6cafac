"""
Bi-LSTM fusion attention.

For every grid cell the present modality tokens (canonical order) followed by
the fusion token form a short sequence run through a bidirectional LSTM. The
fusion element's output h_f scores each modality output h_i with

    score_i = u^T tanh(W [h_f; h_i] + b),    beta = softmax(score),    a = sum_i beta_i h_i

and the fusion token becomes ``fusion + proj(a)``. Modality tokens are never
written, and cells with no modality token keep their fusion token unchanged.
"""

from typing import List, Tuple

import torch
from torch import nn
from torch.nn.utils.rnn import pack_padded_sequence, pad_packed_sequence

from ..utils.errors import ContractViolation
from .attention import masked_softmax
from .tokenizer import TokenLayout


def bilstm_fusion_attention(h_modalities: torch.Tensor,
                            h_fusion: torch.Tensor,
                            valid: torch.Tensor,
                            u: torch.Tensor,
                            W: torch.Tensor,
                            b: torch.Tensor) -> Tuple[torch.Tensor, torch.Tensor]:
    """Attention of the fusion output over modality outputs.

    h_modalities: (N, S, H), h_fusion: (N, H), valid: (N, S) bool,
    u: (A,), W: (A, 2H), b: (A,). Returns a: (N, H) and beta: (N, S).
    """
    if h_modalities.shape[1] == 0 or not torch.all(valid.any(dim=-1)):
        raise ContractViolation("Bi-LSTM fusion attention needs at least one modality per position")
    paired = torch.cat([h_fusion.unsqueeze(1).expand_as(h_modalities), h_modalities], dim=-1)
    scores = torch.tanh(paired @ W.transpose(0, 1) + b) @ u
    beta = masked_softmax(scores, valid)
    a = (beta.unsqueeze(-1) * h_modalities).sum(dim=1)
    return a, beta


def _cell_sequences(layout: TokenLayout) -> Tuple[List[List[int]], List[int]]:
    """Per grid cell, sequence indices of its modality tokens in canonical order, then of its fusion token."""
    cells: List[List[int]] = [[] for _ in range(layout.num_patches)]
    for name in layout.modalities:
        start, _ = layout.spans[name]
        for offset, cell in enumerate(layout.patch_index[name]):
            cells[cell].append(start + offset)
    fusion = layout.fusion_indices()
    return [tokens + [fusion[cell]] for cell, tokens in enumerate(cells)], fusion


class BiLSTMFusion(nn.Module):
    def __init__(self, dim: int):
        super().__init__()
        if dim % 2:
            raise ContractViolation(f"Bi-LSTM fusion needs an even dim, got {dim}")
        self.lstm = nn.LSTM(dim, dim // 2, num_layers=1, bidirectional=True, batch_first=True)
        self.score = nn.Linear(2 * dim, dim)
        self.u = nn.Parameter(torch.zeros(dim))
        self.proj = nn.Linear(dim, dim)
        nn.init.trunc_normal_(self.u, std=0.02)

    def attend(self, sequence: torch.Tensor, layout: TokenLayout) -> Tuple[torch.Tensor, torch.Tensor, torch.Tensor]:
        """Run the LSTM over every cell that has modality tokens; returns (a, beta, active cells)."""
        batch, _, dim = sequence.shape
        cell_sequences, _ = _cell_sequences(layout)
        active = [cell for cell, seq in enumerate(cell_sequences) if len(seq) > 1]
        width = max((len(cell_sequences[c]) for c in active), default=1)
        padded = [cell_sequences[c] + [cell_sequences[c][-1]] * (width - len(cell_sequences[c])) for c in active]
        lengths = torch.as_tensor([len(cell_sequences[c]) for c in active], dtype=torch.long)
        active_index = torch.as_tensor(active, dtype=torch.long)
        if not active:
            empty = sequence.new_zeros(batch, 0, dim)
            return empty, sequence.new_zeros(batch, 0, 0), active_index

        index = torch.as_tensor(padded, dtype=torch.long, device=sequence.device)
        tokens = sequence[:, index].reshape(batch * len(active), width, dim)
        lengths = lengths.repeat(batch)
        packed = pack_padded_sequence(tokens, lengths, batch_first=True, enforce_sorted=False)
        output, _ = self.lstm(packed)
        hidden, _ = pad_packed_sequence(output, batch_first=True, total_length=width)

        rows = torch.arange(hidden.shape[0])
        h_fusion = hidden[rows, lengths - 1]
        h_modalities = hidden[:, :width - 1]
        valid = torch.arange(width - 1).unsqueeze(0) < (lengths - 1).unsqueeze(1)
        a, beta = bilstm_fusion_attention(h_modalities, h_fusion, valid, self.u, self.score.weight, self.score.bias)
        return a.reshape(batch, len(active), dim), beta.reshape(batch, len(active), width - 1), active_index

    def forward(self, sequence: torch.Tensor, layout: TokenLayout) -> torch.Tensor:
        a, _, active = self.attend(sequence, layout)
        if active.numel() == 0:
            return sequence
        fusion_positions = torch.as_tensor(layout.fusion_indices(), dtype=torch.long)[active]
        updated = sequence[:, fusion_positions] + self.proj(a)
        out = sequence.clone()
        out[:, fusion_positions] = updated
        return out
