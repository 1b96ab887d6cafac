import math

import pytest
import torch

from src.models.fusion import BiLSTMFusion, bilstm_fusion_attention
from src.models.tokenizer import TokenLayout
from src.utils.errors import ContractViolation


class TestAttentionWeights:
    def test_equal_scores_give_uniform_beta(self):
        h = torch.randn(4, 3, 6)
        valid = torch.ones(4, 3, dtype=torch.bool)
        a, beta = bilstm_fusion_attention(h, torch.randn(4, 6), valid, torch.zeros(5), torch.randn(5, 12), torch.randn(5))
        assert torch.allclose(beta, torch.full((4, 3), 1 / 3))
        assert torch.allclose(a, h.mean(dim=1), atol=1e-6)

    def test_single_modality(self):
        h = torch.randn(2, 1, 4)
        a, beta = bilstm_fusion_attention(h, torch.randn(2, 4), torch.ones(2, 1, dtype=torch.bool),
                                          torch.randn(3), torch.randn(3, 8), torch.randn(3))
        assert torch.equal(beta, torch.ones(2, 1))
        assert torch.allclose(a, h[:, 0])

    def test_two_modality_oracle(self):
        h = torch.tensor([[[0.0], [0.5]]], dtype=torch.float64)
        u = torch.tensor([math.log(3.0) / math.tanh(0.5)], dtype=torch.float64)
        W = torch.tensor([[0.0, 1.0]], dtype=torch.float64)
        b = torch.zeros(1, dtype=torch.float64)
        a, beta = bilstm_fusion_attention(h, torch.zeros(1, 1, dtype=torch.float64),
                                          torch.ones(1, 2, dtype=torch.bool), u, W, b)
        assert torch.allclose(beta, torch.tensor([[0.25, 0.75]], dtype=torch.float64), atol=1e-12)
        assert a.item() == pytest.approx(0.375, abs=1e-12)

    def test_padding_is_ignored(self):
        h = torch.tensor([[[1.0], [2.0], [99.0]]])
        valid = torch.tensor([[True, True, False]])
        _, beta = bilstm_fusion_attention(h, torch.zeros(1, 1), valid, torch.zeros(1), torch.zeros(1, 2), torch.zeros(1))
        assert beta[0, 2].item() == 0.0

    def test_no_modality(self):
        with pytest.raises(ContractViolation):
            bilstm_fusion_attention(torch.randn(2, 2, 4), torch.randn(2, 4), torch.zeros(2, 2, dtype=torch.bool),
                                    torch.randn(3), torch.randn(3, 8), torch.randn(3))


class TestFusionBlock:
    def test_odd_dim(self):
        with pytest.raises(ContractViolation):
            BiLSTMFusion(7)

    def test_only_fusion_tokens_change(self):
        torch.manual_seed(0)
        block = BiLSTMFusion(8)
        full = TokenLayout.build({"optical": range(4), "sar": range(4)}, 4, (2, 2))
        _, layout = full.select({"optical": [0, 1], "sar": [1]})
        x = torch.randn(2, layout.length, 8)
        with torch.no_grad():
            y = block(x, layout)
        fusion = layout.fusion_indices()
        others = [i for i in range(layout.length) if i not in fusion]
        assert torch.equal(y[:, others], x[:, others])
        assert not torch.equal(y[:, fusion[0]], x[:, fusion[0]])
        assert not torch.equal(y[:, fusion[1]], x[:, fusion[1]])
        # cells 2 and 3 lost every modality token
        assert torch.equal(y[:, fusion[2:]], x[:, fusion[2:]])

    def test_no_visible_tokens_is_identity(self):
        block = BiLSTMFusion(8)
        _, layout = TokenLayout.build({"dem": range(4)}, 4, (2, 2)).select({"dem": []})
        x = torch.randn(1, layout.length, 8)
        assert torch.equal(block(x, layout), x)

    def test_beta_over_present_modalities(self):
        block = BiLSTMFusion(8)
        full = TokenLayout.build({"optical": range(4), "sar": range(4), "dem": range(4)}, 4, (2, 2))
        _, layout = full.select({"optical": [0], "sar": [0, 1], "dem": [0, 1, 2]})
        x = torch.randn(3, layout.length, 8)
        with torch.no_grad():
            _, beta, active = block.attend(x, layout)
        assert active.tolist() == [0, 1, 2]
        assert torch.allclose(beta.sum(dim=-1), torch.ones(3, 3))
        # cell 2 has only dem, so a single weight of 1
        assert torch.allclose(beta[:, 2, 0], torch.ones(3))
        assert torch.all(beta[:, 2, 1:] == 0)
