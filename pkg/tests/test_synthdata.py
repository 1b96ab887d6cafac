import numpy as np
import pytest

from src.generators import (
    TileDataset,
    generate_dataset,
    generate_scene,
    make_splits,
    read_sample,
    render_sample,
    write_sample,
)
from src.generators.dataset import SPLITS_FILE
from src.utils.errors import ConfigurationError, ContainerError, ContractViolation
from src.utils.run_config import DataConfig, NoiseConfig

QUIET = NoiseConfig(optical_sigma=0, sar_speckle_looks=0, sar_floor_sigma=0, dem_sigma=0, map_flip_fraction=0)


class TestScene:
    def test_same_seed_same_scene(self):
        a = generate_scene(7, size=32, num_classes=4)
        b = generate_scene(7, size=32, num_classes=4)
        assert a.to_json() == b.to_json()

    def test_different_seeds_differ(self):
        assert generate_scene(7, size=32, num_classes=4).to_json() != generate_scene(8, size=32, num_classes=4).to_json()

    def test_empty_scene_is_background(self):
        scene = generate_scene(3, size=32, num_classes=4, object_count_range=(0, 0))
        label, height = scene.rasterize()
        assert scene.objects == []
        assert not label.any()
        assert not height.any()

    def test_object_classes_in_range(self):
        scene = generate_scene(11, size=32, num_classes=5, object_count_range=(6, 6))
        assert all(1 <= obj.class_id < 5 for obj in scene.objects)

    @pytest.mark.parametrize("size,classes", [(30, 4), (0, 4), (32, 1)])
    def test_invalid_geometry(self, size, classes):
        with pytest.raises(ConfigurationError):
            generate_scene(0, size=size, num_classes=classes, patch_size=8)


class TestRender:
    def test_zero_noise_map_equals_label(self):
        sample = render_sample(generate_scene(5, size=32, num_classes=5), QUIET)
        assert np.array_equal(sample.map, sample.label)

    def test_full_flip_agreement_is_one_over_k(self):
        scene = generate_scene(9, size=320, num_classes=2, patch_size=8)
        sample = render_sample(scene, NoiseConfig(map_flip_fraction=1.0))
        agreement = float((sample.map == sample.label).mean())
        assert sample.label.size >= 100_000
        assert abs(agreement - 0.5) < 0.01

    def test_background_only(self):
        scene = generate_scene(4, size=32, num_classes=3, object_count_range=(0, 0))
        sample = render_sample(scene, QUIET)
        assert np.all(sample.dem == sample.dem.flat[0])
        assert not sample.sar.any()

    def test_background_sar_is_noise_only(self):
        scene = generate_scene(4, size=32, num_classes=3, object_count_range=(0, 0))
        sample = render_sample(scene, NoiseConfig(sar_floor_sigma=0.02))
        assert np.abs(sample.sar).max() < 0.2

    def test_noise_is_clamped(self):
        sample = render_sample(generate_scene(1, size=32), NoiseConfig(map_flip_fraction=3.0, dem_sigma=-1.0))
        assert np.isfinite(sample.dem).all()

    def test_shapes_and_dtypes(self):
        sample = render_sample(generate_scene(2, size=32, num_classes=5))
        assert sample.optical.shape == (3, 32, 32)
        assert sample.sar.shape == (2, 32, 32)
        assert sample.dem.shape == (1, 32, 32)
        assert sample.map.dtype == np.int32 and sample.label.dtype == np.int32
        assert sample.map.max() < 5

    def test_map_alone_predicts_label(self):
        flip = 0.25
        samples = [render_sample(generate_scene(s, size=32), NoiseConfig(map_flip_fraction=flip)) for s in range(20)]
        accuracy = np.mean([(s.map == s.label).mean() for s in samples])
        assert accuracy >= 1 - flip - 0.02

    def test_render_is_deterministic(self):
        scene = generate_scene(12, size=32)
        assert render_sample(scene).equals(render_sample(scene))


class TestContainer:
    def test_round_trip(self, tmp_path):
        sample = render_sample(generate_scene(21, size=32), sample_id="tile_a")
        path = write_sample(sample, tmp_path, num_classes=5)
        assert read_sample(path).equals(sample)

    def test_shape_mismatch(self, tmp_path):
        sample = render_sample(generate_scene(21, size=32), sample_id="tile_b")
        path = write_sample(sample, tmp_path)
        (path / "optical.bin").write_bytes(np.zeros((3, 16, 16), dtype="<f4").tobytes())
        with pytest.raises(ContainerError, match="shape mismatch") as err:
            read_sample(path)
        assert err.value.name == "optical"

    def test_missing_modality_is_named(self, tmp_path):
        sample = render_sample(generate_scene(21, size=32), sample_id="tile_c")
        path = write_sample(sample, tmp_path)
        (path / "dem.bin").unlink()
        with pytest.raises(ContainerError, match="dem") as err:
            read_sample(path)
        assert err.value.name == "dem"

    def test_non_finite_rejected(self, tmp_path):
        sample = render_sample(generate_scene(21, size=32), sample_id="tile_d")
        sample.dem[0, 0, 0] = np.nan
        with pytest.raises(ContainerError) as err:
            write_sample(sample, tmp_path)
        assert err.value.name == "dem"


class TestSplits:
    def test_sizes(self):
        manifest = make_splits([f"s{i}" for i in range(10)], seed=0, ratios=(0.8, 0.1, 0.1))
        assert manifest.sizes() == {"train": 8, "val": 1, "test": 1}

    def test_deterministic_disjoint_exhaustive(self):
        ids = [f"s{i}" for i in range(37)]
        a = make_splits(ids, seed=3)
        b = make_splits(list(reversed(ids)), seed=3)
        assert a == b
        parts = [set(a.train), set(a.val), set(a.test)]
        assert set.union(*parts) == set(ids)
        assert sum(len(p) for p in parts) == len(ids)

    def test_bad_ratios(self):
        with pytest.raises(ConfigurationError):
            make_splits(["a", "b"], seed=0, ratios=(0.5, 0.5, 0.5))

    def test_empty_ids(self):
        with pytest.raises(ContractViolation):
            make_splits([], seed=0)

    def test_save_load(self, tmp_path):
        manifest = make_splits([f"s{i}" for i in range(10)], seed=1)
        assert type(manifest).load(manifest.save(tmp_path / "splits.json")) == manifest


class TestDataset:
    def test_regeneration_is_bit_identical(self, tmp_path):
        data = DataConfig(num_samples=6, tile_size=16)
        first = generate_dataset(tmp_path / "a", data, seed=4, patch_size=8)
        second = generate_dataset(tmp_path / "b", data, seed=4, patch_size=8)
        assert first == second
        for sample_id in first.train:
            a = read_sample(tmp_path / "a" / "samples" / sample_id)
            b = read_sample(tmp_path / "b" / "samples" / sample_id)
            assert a.equals(b)

    def test_loads_split_tensors(self, tiny_data_root):
        train = TileDataset.from_directory(tiny_data_root, "train")
        assert len(train) == 16
        assert train.shape() == (16, 16)
        batch = train.batch([0, 1])
        assert batch["optical"].shape == (2, 3, 16, 16)
        assert batch["map"].dtype.is_floating_point is False

    def test_missing_dataset(self, tmp_path):
        with pytest.raises(ContainerError, match=SPLITS_FILE):
            TileDataset.from_directory(tmp_path, "train")

    def test_batches_cover_split(self, tiny_train):
        rng = np.random.default_rng(0)
        seen = sum(b["label"].shape[0] for b in tiny_train.iter_batches(5, rng))
        assert seen == len(tiny_train)
        dropped = [b["label"].shape[0] for b in tiny_train.iter_batches(5, rng, drop_last=True)]
        assert dropped == [5, 5, 5]
