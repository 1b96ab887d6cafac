"""
Shared fixtures: a tiny configuration and dataset, plus default-scale runs for the slow tests.
"""

import json
import sys
from pathlib import Path

import pytest
import torch

sys.path.insert(0, str(Path(__file__).resolve().parent.parent))

from src.experiment_runner import cell_config  # noqa: E402
from src.generators.dataset import TileDataset, generate_dataset  # noqa: E402
from src.trainers.downstream import DownstreamTrainer  # noqa: E402
from src.trainers.evaluation import evaluate  # noqa: E402
from src.trainers.pretrainer import Pretrainer  # noqa: E402
from src.utils.run_config import build_config  # noqa: E402

TINY = {
    "data": {"num_samples": 20, "tile_size": 16, "num_classes": 3, "object_extent_range": [3, 8]},
    "model": {
        "dim": 16, "patch_size": 8, "depth": 1, "heads": 2, "mlp_ratio": 2.0, "map_embed_dim": 4,
        "decoder_dim": 8, "decoder_depth": 1, "decoder_heads": 2, "contrastive_dim": 8,
    },
    "pretrain": {"budget": 6, "batch_size": 4, "epochs": 2, "checkpoint_every": 1},
    "downstream": {"batch_size": 4, "epochs": 2},
    "quiet": True,
}


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: desk-scale training runs (minutes)")


@pytest.fixture(scope="session")
def tiny_data_root(tmp_path_factory):
    root = tmp_path_factory.mktemp("tiny_data")
    cfg = build_config(TINY, {"data.root": str(root)})
    generate_dataset(root, cfg.data, cfg.seed, cfg.model.patch_size)
    return root


@pytest.fixture
def tiny_cfg(tiny_data_root, tmp_path):
    return build_config(TINY, {"data.root": str(tiny_data_root), "output_dir": str(tmp_path / "runs")})


@pytest.fixture
def tiny_train(tiny_data_root):
    return TileDataset.from_directory(tiny_data_root, "train")


@pytest.fixture
def tiny_batch(tiny_train):
    return tiny_train.batch([0, 1, 2])


@pytest.fixture
def double_precision():
    previous = torch.get_default_dtype()
    torch.set_default_dtype(torch.float64)
    yield
    torch.set_default_dtype(previous)


@pytest.fixture(scope="session")
def tiny_pretrained(tiny_data_root, tmp_path_factory):
    """Checkpoint of a one-epoch pretraining run on the tiny dataset."""
    cfg = build_config(TINY, {"data.root": str(tiny_data_root), "pretrain.epochs": 1})
    train = TileDataset.from_directory(tiny_data_root, "train")
    return Pretrainer(cfg, train, output_dir=tmp_path_factory.mktemp("pretrain")).run().checkpoint


@pytest.fixture
def tiny_config_file(tmp_path):
    """The tiny configuration as a JSON file with its own data and output directories."""
    data = json.loads(json.dumps(TINY))
    data["data"]["root"] = str(tmp_path / "data")
    data["output_dir"] = str(tmp_path / "runs")
    path = tmp_path / "tiny.json"
    path.write_text(json.dumps(data))
    return path


@pytest.fixture(scope="session")
def desk_cfg(tmp_path_factory):
    """Default configuration on a freshly generated default-size dataset (512 training tiles)."""
    root = tmp_path_factory.mktemp("desk_data")
    cfg = build_config({"quiet": True}, {
        "data.root": str(root),
        "output_dir": str(tmp_path_factory.mktemp("desk_runs")),
    })
    generate_dataset(root, cfg.data, cfg.seed, cfg.model.patch_size)
    return cfg


@pytest.fixture(scope="session")
def desk_pretrain(desk_cfg):
    """Pretrain at the default scale; ``run("generative")`` sets lambda_2 to 0. Each flavour runs once."""
    train = TileDataset.from_directory(desk_cfg.data_path, "train")
    val = TileDataset.from_directory(desk_cfg.data_path, "val")
    results = {}

    def run(flavour):
        if flavour not in results:
            lambda_2 = 0.0 if flavour == "generative" else desk_cfg.pretrain.lambda_2
            cfg = desk_cfg.model_copy(update={"pretrain": desk_cfg.pretrain.model_copy(update={"lambda_2": lambda_2})})
            trainer = Pretrainer(cfg, train, val, output_dir=desk_cfg.output_path / f"pretrain_{flavour}")
            results[flavour] = trainer.run()
        return results[flavour]

    return run


@pytest.fixture(scope="session")
def desk_cell_miou(desk_cfg):
    """Test-split mIoU per modality subset for a scratch ablation cell. Each cell trains once."""
    train = TileDataset.from_directory(desk_cfg.data_path, "train")
    test = TileDataset.from_directory(desk_cfg.data_path, "test")
    results = {}

    def run(cell):
        if cell not in results:
            trainer = DownstreamTrainer(cell_config(desk_cfg, cell), train, output_dir=desk_cfg.output_path / cell)
            trainer.run()
            results[cell] = {r.subset: r.miou for r in evaluate(trainer.model, test, config_name=cell)}
        return results[cell]

    return run
