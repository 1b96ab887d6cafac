import pytest
import torch

import config
from src.models import FusionBackbone, FusionEncoder, Tokenizer
from src.utils.checkpoints import load_checkpoint, save_checkpoint, state_checksum
from src.utils.errors import ContainerError, ContractViolation


def _backbone(depth=2, seed=0, **kwargs):
    torch.manual_seed(seed)
    return FusionBackbone(tile_size=16, patch_size=8, dim=16, depth=depth, heads=2, mlp_ratio=2.0,
                          num_classes=3, map_embed_dim=4, **kwargs).eval()


def _inputs(seed=0, batch=2):
    g = torch.Generator().manual_seed(seed)
    return {
        "optical": torch.rand(batch, 3, 16, 16, generator=g),
        "sar": torch.rand(batch, 2, 16, 16, generator=g),
        "dem": torch.rand(batch, 1, 16, 16, generator=g),
        "map": torch.randint(0, 3, (batch, 1, 16, 16), generator=g),
    }


class TestIsolation:
    @pytest.mark.parametrize("depth", [0, 1, 3])
    @pytest.mark.parametrize("param_seed", [0, 1, 2])
    @pytest.mark.parametrize("kept", config.MODALITIES)
    def test_other_modalities_never_reach_a_span(self, depth, param_seed, kept):
        model = _backbone(depth, seed=param_seed)
        base = _inputs()
        with torch.no_grad():
            seq, layout = model.tokenizer(base, config.MODALITIES)
            _, reference = model.encoder.encode(seq, layout, return_hidden=True)
            reference_vector = model.encoder.readout(reference[-1], layout).modality_vectors[kept]
            own = layout.span_indices(kept) + [layout.class_slots[kept]]
            for trial in range(25):
                noise = _inputs(seed=100 + trial)
                other = {
                    name: base[name] if name == kept
                    else noise[name] if name == "map" else noise[name] * 10 - 5
                    for name in config.MODALITIES
                }
                seq2, _ = model.tokenizer(other, config.MODALITIES)
                _, hidden = model.encoder.encode(seq2, layout, return_hidden=True)
                for a, b in zip(reference, hidden):
                    assert torch.equal(a[:, own], b[:, own])
                vector = model.encoder.readout(hidden[-1], layout).modality_vectors[kept]
                assert torch.equal(vector, reference_vector)

    def test_subset_matches_full_set(self):
        model = _backbone(2)
        batch = _inputs()
        with torch.no_grad():
            full = model(batch, config.MODALITIES)
            alone = model(batch, ["dem"])
        assert torch.allclose(full.modality_vectors["dem"], alone.modality_vectors["dem"], atol=1e-6)

    def test_unmasked_variant_leaks(self):
        model = _backbone(2, isolate=False)
        a, b = _inputs(0), _inputs(0)
        b["sar"] = b["sar"] + 1.0
        with torch.no_grad():
            va = model(a, config.MODALITIES).modality_vectors["optical"]
            vb = model(b, config.MODALITIES).modality_vectors["optical"]
        assert not torch.allclose(va, vb)


class TestEncoder:
    def test_zero_depth_is_fusion_block(self):
        torch.manual_seed(0)
        tokenizer = Tokenizer(tile_size=16, patch_size=8, dim=16, num_classes=3, map_embed_dim=4)
        encoder = FusionEncoder(dim=16, depth=0, heads=2)
        with torch.no_grad():
            seq, layout = tokenizer(_inputs(), ["optical", "sar"])
            assert torch.equal(encoder.encode(seq, layout), encoder.fusion_block(seq, layout))

    def test_without_lstm_fusion_tokens_start_unchanged(self):
        encoder = FusionEncoder(dim=16, depth=1, heads=2, use_lstm=False)
        tokenizer = Tokenizer(tile_size=16, patch_size=8, dim=16, num_classes=3, map_embed_dim=4)
        with torch.no_grad():
            seq, layout = tokenizer(_inputs(), ["dem"])
            _, hidden = encoder.encode(seq, layout, return_hidden=True)
        assert torch.equal(hidden[0], seq)

    def test_length_mismatch(self):
        encoder = FusionEncoder(dim=16, depth=1, heads=2)
        tokenizer = Tokenizer(tile_size=16, patch_size=8, dim=16, num_classes=3, map_embed_dim=4)
        seq, layout = tokenizer(_inputs(), ["dem"])
        with pytest.raises(ContractViolation):
            encoder.encode(seq[:, :-1], layout)


class TestReadout:
    def test_shapes_and_present_modalities(self):
        model = _backbone(1)
        with torch.no_grad():
            result = model(_inputs(), ["sar", "optical"])
        assert list(result.modality_vectors) == ["optical", "sar"]
        assert result.fusion_vector.shape == (2, 16)
        assert result.fusion_tokens.shape == (2, 4, 16)

    def test_fusion_vector_sees_every_modality(self):
        model = _backbone(1)
        a, b = _inputs(0), _inputs(0)
        b["dem"] = b["dem"] + 2.0
        with torch.no_grad():
            ra = model(a, config.MODALITIES)
            rb = model(b, config.MODALITIES)
        assert not torch.allclose(ra.fusion_vector, rb.fusion_vector)
        assert not torch.allclose(ra.modality_vectors["dem"], rb.modality_vectors["dem"])
        assert torch.equal(ra.modality_vectors["sar"], rb.modality_vectors["sar"])

    def test_masked_visible_tokens(self):
        model = _backbone(1)
        visible = {"optical": [0, 3], "sar": [], "dem": [1, 2, 3], "map": [0]}
        with torch.no_grad():
            result = model(_inputs(), config.MODALITIES, visible=visible)
        assert result.fusion_tokens.shape == (2, 4, 16)
        assert set(result.modality_vectors) == set(config.MODALITIES)

    def test_empty_subset(self):
        with pytest.raises(ContractViolation):
            _backbone(1)(_inputs(), [])


class TestCheckpoint:
    def test_round_trip(self, tmp_path):
        model = _backbone(2)
        optimizer = torch.optim.AdamW(model.parameters(), lr=1e-3)
        model(_inputs(), config.MODALITIES).fusion_vector.sum().backward()
        optimizer.step()
        save_checkpoint(tmp_path / "ckpt", model, optimizer, meta={"epoch": 3})

        torch.manual_seed(99)
        restored = FusionBackbone(tile_size=16, patch_size=8, dim=16, depth=2, heads=2, mlp_ratio=2.0,
                                  num_classes=3, map_embed_dim=4).eval()
        restored_optimizer = torch.optim.AdamW(restored.parameters(), lr=1e-3)
        meta = load_checkpoint(tmp_path / "ckpt", restored, restored_optimizer)

        assert meta["epoch"] == 3
        assert state_checksum(restored) == state_checksum(model)
        with torch.no_grad():
            assert torch.equal(model(_inputs(), ["sar"]).fusion_vector, restored(_inputs(), ["sar"]).fusion_vector)
        assert restored_optimizer.state_dict()["param_groups"][0]["lr"] == pytest.approx(1e-3)

    def test_missing(self, tmp_path):
        with pytest.raises(ContainerError):
            load_checkpoint(tmp_path / "nowhere", _backbone(1))

    def test_architecture_mismatch(self, tmp_path):
        save_checkpoint(tmp_path / "ckpt", _backbone(1))
        with pytest.raises(ContainerError, match="does not match"):
            load_checkpoint(tmp_path / "ckpt", _backbone(2))

    def test_checksum_sees_sign_flips_and_permutations(self):
        model = _backbone(1)
        reference = state_checksum(model)
        weight = model.encoder.blocks[0].attn.q.weight
        with torch.no_grad():
            weight.neg_()
        flipped = state_checksum(model)
        assert flipped != reference
        with torch.no_grad():
            weight.neg_()
            weight.copy_(weight.flip(0))
        assert state_checksum(model) not in (reference, flipped)
        with torch.no_grad():
            weight.copy_(weight.flip(0))
        assert state_checksum(model) == reference
