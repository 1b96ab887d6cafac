"""
Experiment runner

Implements the commands behind ``main.py``: synthetic data generation,
pretraining, downstream training, evaluation, the ablation matrix and plots.
Every command returns a CommandResult with a printable summary and writes a
RunManifest next to its artifacts.
"""

import hashlib
import logging
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Callable, Dict, List, Optional, Sequence, Tuple

from pydantic import BaseModel, Field

from . import __version__
from .generators.dataset import SPLITS_FILE, TileDataset, generate_dataset
from .trainers.downstream import MODEL_DIR, DownstreamTrainer, load_segmenter
from .trainers.evaluation import EVAL_FILE, EvalReport, evaluate, write_reports
from .trainers.pretrainer import Pretrainer
from .trainers.subsets import subset_label
from .utils.errors import ConfigurationError, ContainerError
from .utils.plotting import plot_degradation_heatmap, plot_loss_curves
from .utils.run_config import RunConfig
from .utils.tables import comparison_table, read_table, write_frame

logger = logging.getLogger(__name__)

MANIFEST_FILE = "run_manifest.json"
ABLATION_FILE = "ablation.tsv"

# downstream overrides per ablation cell; "pretrain" names the pretraining flavour a cell needs
ABLATION_CELLS: Dict[str, Dict] = {
    "full": {"downstream": {"mode": "scratch"}},
    "no_lstm": {"downstream": {"mode": "scratch", "no_lstm": True}},
    "no_random": {"downstream": {"mode": "scratch", "no_random": True}},
    "no_mask": {"downstream": {"mode": "scratch", "no_mask": True}},
    "partial_finetune": {"downstream": {"mode": "partial-finetune"}, "pretrain": "contrastive"},
    "full_finetune": {"downstream": {"mode": "full-finetune"}, "pretrain": "contrastive"},
    "partial_finetune_gen": {"downstream": {"mode": "partial-finetune"}, "pretrain": "generative"},
    "full_finetune_gen": {"downstream": {"mode": "full-finetune"}, "pretrain": "generative"},
    "multivit": {"downstream": {"mode": "scratch", "no_mask": True, "no_random": True}},
}


def code_hash(version: str = __version__) -> str:
    """Git-style blob hash of the code version string."""
    data = version.encode()
    return hashlib.sha1(b"blob %d\0" % len(data) + data).hexdigest()


def _now() -> str:
    return datetime.now(timezone.utc).isoformat()


class RunManifest(BaseModel):
    command: str
    config: Dict
    code_hash: str = Field(default_factory=code_hash)
    started_at: str = Field(default_factory=_now)
    finished_at: Optional[str] = None
    artifacts: Dict[str, str] = Field(default_factory=dict)

    def write(self, directory: Path) -> Path:
        """Stamp the end time and write atomically; every artifact must exist."""
        missing = [path for path in self.artifacts.values() if not Path(path).exists()]
        if missing:
            raise ContainerError(f"run manifest references missing artifacts: {missing}", name="manifest")
        self.finished_at = _now()
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        tmp_path = directory / (MANIFEST_FILE + ".tmp")
        tmp_path.write_text(self.model_dump_json(indent=2))
        os.replace(tmp_path, directory / MANIFEST_FILE)
        return directory / MANIFEST_FILE

    @classmethod
    def load(cls, path: Path) -> "RunManifest":
        path = Path(path)
        if not path.exists():
            raise ContainerError(f"missing run manifest: {path}", name=MANIFEST_FILE)
        return cls.model_validate_json(path.read_text())


@dataclass
class CommandResult:
    command: str
    summary: str
    artifacts: Dict[str, str] = field(default_factory=dict)
    manifest: Optional[Path] = None
    reports: List[EvalReport] = field(default_factory=list)


def _finish(command: str, manifest: RunManifest, directory: Path, summary: str,
            reports: Sequence[EvalReport] = ()) -> CommandResult:
    path = manifest.write(directory)
    return CommandResult(command, summary, dict(manifest.artifacts), path, list(reports))


def _dataset(cfg: RunConfig, split: str) -> TileDataset:
    return TileDataset.from_directory(cfg.data_path, split)


def _eval_table(reports: Sequence[EvalReport]) -> str:
    lines = [f"{'subset':<26}{'mIoU':>8}"]
    lines += [f"{subset_label(r.subset):<26}{r.miou:>8.4f}" for r in reports]
    return "\n".join(lines)


def cmd_synth(cfg: RunConfig) -> CommandResult:
    manifest = RunManifest(command="synth", config=cfg.model_dump(mode="json"))
    root = cfg.data_path
    splits = generate_dataset(root, cfg.data, cfg.seed, cfg.model.patch_size, workers=cfg.workers)
    sizes = splits.sizes()
    manifest.artifacts = {"dataset": str(root), "splits": str(root / SPLITS_FILE)}
    summary = (
        f"Generated {sum(sizes.values())} samples in {root}\n"
        f"Split sizes: train {sizes['train']} / val {sizes['val']} / test {sizes['test']}"
    )
    return _finish("synth", manifest, root, summary)


def cmd_pretrain(cfg: RunConfig, resume: bool = False, output_dir: Optional[Path] = None,
                 stop_after: Optional[int] = None) -> CommandResult:
    manifest = RunManifest(command="pretrain", config=cfg.model_dump(mode="json"))
    output_dir = Path(output_dir) if output_dir else cfg.output_path / "pretrain"
    val = _dataset(cfg, "val")
    trainer = Pretrainer(cfg, _dataset(cfg, "train"), val, output_dir)
    result = trainer.run(resume=resume, stop_after=stop_after)

    manifest.artifacts = {"checkpoint": str(result.checkpoint), "losses": str(result.losses_path)}
    lines = [f"Pretrained to {result.checkpoint}"]
    if result.history:
        first, last = result.history[0], result.history[-1]
        lines.append(f"Total loss: epoch {first['epoch']} {first['total']:.4f} -> epoch {last['epoch']} {last['total']:.4f}")
    if result.alignment_path is not None:
        manifest.artifacts["alignment"] = str(result.alignment_path)
        gaps = ", ".join(f"{m} {v['gap']:+.3f}" for m, v in result.alignment.items())
        lines.append(f"Alignment gap (positive - negative cosine): {gaps}")
    return _finish("pretrain", manifest, output_dir, "\n".join(lines))


def cmd_train(cfg: RunConfig, output_dir: Optional[Path] = None, config_name: str = "model") -> CommandResult:
    """Train a segmenter and evaluate it on the test split over every subset."""
    manifest = RunManifest(command="train", config=cfg.model_dump(mode="json"))
    output_dir = Path(output_dir) if output_dir else cfg.output_path / "train"
    result = DownstreamTrainer(cfg, _dataset(cfg, "train"), output_dir).run()
    reports = evaluate(load_segmenter(result.checkpoint, cfg), _dataset(cfg, "test"), config_name=config_name)
    eval_path = write_reports(reports, output_dir)

    manifest.artifacts = {"checkpoint": str(result.checkpoint), "train_log": str(result.log_path), "eval": str(eval_path)}
    summary = f"Trained {cfg.downstream.mode} segmenter -> {result.checkpoint}\n{_eval_table(reports)}"
    return _finish("train", manifest, output_dir, summary, reports)


def cmd_eval(cfg: RunConfig, checkpoint: Optional[Path] = None, split: str = "test",
             output_dir: Optional[Path] = None) -> CommandResult:
    manifest = RunManifest(command="eval", config=cfg.model_dump(mode="json"))
    checkpoint = Path(checkpoint) if checkpoint else cfg.output_path / "train" / MODEL_DIR
    if not checkpoint.exists():
        raise ContainerError(f"no trained model at {checkpoint}; run `main.py train` first", name="checkpoint")
    output_dir = Path(output_dir) if output_dir else cfg.output_path / "eval"
    reports = evaluate(load_segmenter(checkpoint, cfg), _dataset(cfg, split))
    eval_path = write_reports(reports, output_dir)
    manifest.artifacts = {"checkpoint": str(checkpoint), "eval": str(eval_path)}
    summary = f"Evaluated {checkpoint} on {split} ({len(reports)} subsets)\n{_eval_table(reports)}"
    return _finish("eval", manifest, output_dir, summary, reports)


def cell_config(cfg: RunConfig, cell: str, pretrained: Optional[Path] = None) -> RunConfig:
    """Downstream configuration of one ablation cell on top of ``cfg``."""
    if cell not in ABLATION_CELLS:
        raise ConfigurationError(f"unknown ablation cell '{cell}' (known: {', '.join(ABLATION_CELLS)})")
    downstream = cfg.downstream.model_dump()
    downstream.update({"no_lstm": False, "no_random": False, "no_mask": False, "random_combo": True})
    downstream.update(ABLATION_CELLS[cell]["downstream"])
    if pretrained is not None:
        downstream["pretrained"] = str(pretrained)
    data = cfg.model_dump(mode="json")
    data["downstream"] = downstream
    return RunConfig.model_validate(data)


def _pretrain_flavour(cfg: RunConfig, flavour: str) -> RunConfig:
    data = cfg.model_dump(mode="json")
    if flavour == "generative":
        data["pretrain"]["lambda_2"] = 0.0
    return RunConfig.model_validate(data)


def _run_cell(task: Tuple[str, dict, str]) -> List[EvalReport]:
    cell, data, output_dir = task
    cfg = RunConfig.model_validate(data)
    return cmd_train(cfg, Path(output_dir), config_name=cell).reports


def cmd_ablate(cfg: RunConfig, output_dir: Optional[Path] = None) -> CommandResult:
    """Run every configured cell under one seed on the shared dataset and compare them."""
    manifest = RunManifest(command="ablate", config=cfg.model_dump(mode="json"))
    output_dir = Path(output_dir) if output_dir else cfg.output_path / "ablate"
    cells = list(cfg.ablate.cells)
    for cell in cells:
        if cell not in ABLATION_CELLS:
            raise ConfigurationError(f"unknown ablation cell '{cell}' (known: {', '.join(ABLATION_CELLS)})")

    pretrained: Dict[str, Path] = {}
    for flavour in dict.fromkeys(ABLATION_CELLS[c].get("pretrain") for c in cells):
        if flavour is None:
            continue
        if flavour == "contrastive" and cfg.downstream.pretrained:
            pretrained[flavour] = Path(cfg.downstream.pretrained)
            continue
        logger.info("Pretraining the %s backbone for the finetune cells", flavour)
        result = cmd_pretrain(_pretrain_flavour(cfg, flavour), output_dir=output_dir / f"pretrain_{flavour}")
        pretrained[flavour] = Path(result.artifacts["checkpoint"])

    tasks = []
    for cell in cells:
        cell_cfg = cell_config(cfg, cell, pretrained.get(ABLATION_CELLS[cell].get("pretrain")))
        data = cell_cfg.model_dump(mode="json")
        if cfg.workers > 1:
            data["workers"] = 1
        tasks.append((cell, data, str(output_dir / cell)))

    if cfg.workers > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=min(cfg.workers, len(tasks))) as pool:
            results = list(pool.map(_run_cell, tasks))
    else:
        results = [_run_cell(task) for task in tasks]

    reports = [report for cell_reports in results for report in cell_reports]
    eval_path = write_reports(reports, output_dir)
    table = comparison_table(read_table(eval_path))
    ablation_path = output_dir / ABLATION_FILE
    write_frame(ablation_path, table.reset_index())

    manifest.artifacts = {"eval": str(eval_path), "ablation": str(ablation_path)}
    manifest.artifacts.update({f"pretrained_{k}": str(v) for k, v in pretrained.items()})
    summary = f"Ablation over {len(cells)} configurations -> {ablation_path}\n{table.to_string(float_format='%.4f')}"
    return _finish("ablate", manifest, output_dir, summary, reports)


def _default_plot_inputs(cfg: RunConfig) -> List[Path]:
    root = cfg.output_path
    candidates = [root / "pretrain" / "losses.tsv", root / "ablate" / EVAL_FILE, root / "train" / EVAL_FILE]
    found = [p for p in candidates if p.exists()]
    if not found:
        raise ContainerError(
            "nothing to plot; looked for " + ", ".join(str(p) for p in candidates), name="plot"
        )
    return found


def cmd_plot(cfg: RunConfig, paths: Optional[Sequence[Path]] = None, output_dir: Optional[Path] = None) -> CommandResult:
    """Loss curves for ``losses.tsv`` inputs, degradation heatmaps for ``eval.tsv`` inputs."""
    manifest = RunManifest(command="plot", config=cfg.model_dump(mode="json"))
    paths = [Path(p) for p in paths] if paths else _default_plot_inputs(cfg)
    missing = [str(p) for p in paths if not p.exists()]
    if missing:
        raise ContainerError(f"missing plot input: {', '.join(missing)}", name="plot")
    output_dir = Path(output_dir) if output_dir else cfg.output_path / "plots"

    for index, path in enumerate(paths):
        columns = list(read_table(path).columns)
        stem = f"{path.parent.name}_{path.stem}"
        if columns == ["epoch", "term", "value"]:
            out = plot_loss_curves(path, output_dir / f"{stem}_loss.png")
        elif "miou" in columns:
            out = plot_degradation_heatmap(path, output_dir / f"{stem}_heatmap.png")
        else:
            raise ContainerError(f"{path} is neither a losses nor an eval table (columns {columns})", name=str(path))
        manifest.artifacts[f"plot_{index}"] = str(out)

    summary = "Wrote " + ", ".join(manifest.artifacts.values())
    return _finish("plot", manifest, output_dir, summary)


COMMANDS: Dict[str, Callable[..., CommandResult]] = {
    "synth": cmd_synth,
    "pretrain": cmd_pretrain,
    "train": cmd_train,
    "eval": cmd_eval,
    "ablate": cmd_ablate,
    "plot": cmd_plot,
}


def replay(manifest_path: Path) -> CommandResult:
    """Re-run the command recorded in a manifest from its config snapshot."""
    manifest = RunManifest.load(manifest_path)
    if manifest.command not in COMMANDS:
        raise ConfigurationError(f"manifest records unknown command '{manifest.command}'")
    cfg = RunConfig.model_validate(manifest.config)
    return COMMANDS[manifest.command](cfg)
