import json

import pytest

import config
from main import build_parser, main
from src.experiment_runner import (
    ABLATION_CELLS,
    ABLATION_FILE,
    MANIFEST_FILE,
    RunManifest,
    cell_config,
    code_hash,
    replay,
)
from src.generators.splits import SplitManifest
from src.utils.errors import ConfigurationError, ContainerError
from src.utils.run_config import build_config, config_fields, load_config
from src.utils.tables import read_table


class TestConfig:
    def test_flags_override_file_override_defaults(self, tmp_path):
        path = tmp_path / "cfg.json"
        path.write_text(json.dumps({"seed": 3, "pretrain": {"alpha": 0.5}}))
        assert load_config().seed == config.DEFAULT_SEED
        assert load_config(path).seed == 3
        cfg = load_config(path, {"seed": 5})
        assert cfg.seed == 5
        assert cfg.pretrain.alpha == 0.5

    def test_missing_file(self, tmp_path):
        with pytest.raises(ConfigurationError):
            load_config(tmp_path / "absent.json")

    def test_invalid_json(self, tmp_path):
        path = tmp_path / "broken.json"
        path.write_text("{seed: ")
        with pytest.raises(ConfigurationError):
            load_config(path)

    @pytest.mark.parametrize("overrides", [
        {"data.split_ratios": [0.5, 0.5, 0.5]},
        {"data.num_classes": 1},
        {"model.dim": 18},
        {"pretrain.alpha": 0.0},
        {"data.tile_size": 20},
        {"pretrain.budget": 1000},
        {"downstream.mode": "frozen"},
    ])
    def test_invalid_values(self, overrides):
        with pytest.raises(ConfigurationError):
            build_config({}, overrides)

    def test_default_learning_rates(self):
        cfg = build_config({})
        assert cfg.pretrain.lr == 1e-3
        assert cfg.downstream.lr == 1e-3
        assert build_config({}, {"pretrain.lr": 1e-4}).pretrain.lr == 1e-4

    def test_every_field_has_a_flag(self):
        parser = build_parser()
        args = parser.parse_args(["pretrain", "--pretrain.lambda_2", "0", "--model.modalities", "sar,dem"])
        assert getattr(args, "cfg:pretrain.lambda_2") == 0.0
        assert getattr(args, "cfg:model.modalities") == ["sar", "dem"]
        assert "downstream.no_lstm" in config_fields()


class TestCommands:
    def test_synth(self, tmp_path, capsys):
        root = tmp_path / "data"
        code = main(["synth", "--data.root", str(root), "--data.num_samples", "10", "--data.tile_size", "16",
                     "--pretrain.budget", "6"])
        assert code == config.EXIT_OK
        assert SplitManifest.load(root / "splits.json").sizes() == {"train": 8, "val": 1, "test": 1}
        assert (root / MANIFEST_FILE).exists()
        assert "train 8 / val 1 / test 1" in capsys.readouterr().out

    def test_bad_ratios_exit_one(self, tmp_path):
        code = main(["synth", "--data.root", str(tmp_path), "--data.split_ratios", "0.5,0.5,0.5"])
        assert code == config.EXIT_CONTRACT

    def test_eval_missing_checkpoint_exit_two(self, tmp_path):
        code = main(["eval", "--checkpoint", str(tmp_path / "nowhere"), "--output_dir", str(tmp_path)])
        assert code == config.EXIT_IO

    def test_plot_missing_input_lists_it(self, tmp_path, capsys):
        missing = tmp_path / "absent.tsv"
        code = main(["plot", str(missing), "--output_dir", str(tmp_path)])
        assert code == config.EXIT_IO
        assert str(missing) in capsys.readouterr().out

    def test_train_without_dataset_exit_two(self, tmp_path):
        code = main(["train", "--data.root", str(tmp_path / "none"), "--output_dir", str(tmp_path)])
        assert code == config.EXIT_IO


class TestManifest:
    def test_round_trip(self, tmp_path):
        artifact = tmp_path / "a.tsv"
        artifact.write_text("x\n")
        manifest = RunManifest(command="plot", config={"seed": 1}, artifacts={"a": str(artifact)})
        path = manifest.write(tmp_path)
        loaded = RunManifest.load(path)
        assert loaded.command == "plot"
        assert loaded.code_hash == code_hash()
        assert loaded.finished_at is not None

    def test_missing_artifact(self, tmp_path):
        manifest = RunManifest(command="plot", config={}, artifacts={"a": str(tmp_path / "gone")})
        with pytest.raises(ContainerError):
            manifest.write(tmp_path)
        assert not (tmp_path / MANIFEST_FILE).exists()

    def test_code_hash_is_git_blob_sha(self):
        # `git hash-object` of an empty file
        assert code_hash("") == "e69de29bb2d1d6434b8b29ae775ad8c2e48c5391"

    def test_cell_configs(self):
        cfg = build_config({})
        assert cell_config(cfg, "no_lstm").downstream.no_lstm is True
        multivit = cell_config(cfg, "multivit").downstream
        assert multivit.no_mask and multivit.no_random
        assert cell_config(cfg, "partial_finetune", "ckpt").downstream.pretrained == "ckpt"
        with pytest.raises(ConfigurationError):
            cell_config(cfg, "unknown")
        assert set(config.DEFAULT_ABLATION_CELLS) <= set(ABLATION_CELLS)


def test_tiny_pipeline(tiny_config_file, tmp_path):
    runs = tmp_path / "runs"
    base = ["--config", str(tiny_config_file)]

    assert main(["synth", *base]) == config.EXIT_OK
    assert main(["pretrain", *base]) == config.EXIT_OK
    assert (runs / "pretrain" / "losses.tsv").exists()
    assert (runs / "pretrain" / "alignment.tsv").exists()
    assert main(["pretrain", "--resume", *base]) == config.EXIT_OK

    assert main(["train", *base]) == config.EXIT_OK
    first = read_table(runs / "train" / "eval.tsv")
    assert len(first) == 15

    assert main(["eval", "--split", "val", *base]) == config.EXIT_OK
    assert len(read_table(runs / "eval" / "eval.tsv")) == 15

    assert main(["ablate", *base]) == config.EXIT_OK
    ablation = read_table(runs / "ablate" / ABLATION_FILE)
    assert list(ablation.columns) == ["subset"] + config.DEFAULT_ABLATION_CELLS
    assert len(ablation) == 15
    assert ablation["subset"].iloc[0] == "optical+sar+dem+map"

    assert main(["plot", *base]) == config.EXIT_OK
    plots = sorted(p.name for p in (runs / "plots").glob("*.png"))
    assert plots == ["ablate_eval_heatmap.png", "pretrain_losses_loss.png", "train_eval_heatmap.png"]

    replay(runs / "train" / MANIFEST_FILE)
    assert read_table(runs / "train" / "eval.tsv").equals(first)
