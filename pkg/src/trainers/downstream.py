"""
Supervised segmentation with random modality combination.

Training modes:
    scratch           fresh backbone, everything trained at the base lr
    full-finetune     pretrained backbone at ``lr * backbone_lr_mult``, head at ``lr``
    partial-finetune  pretrained backbone frozen, only the head is trained

Ablation flags: ``no_lstm`` skips the Bi-LSTM block, ``no_mask`` replaces the
block attention mask by an all-ones mask, ``no_random`` trains on the full
modality set only.
"""

import logging
import sys
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Mapping, Optional, Sequence

import torch
from torch import nn
from tqdm import tqdm

from ..generators.dataset import TileDataset
from ..models.encoder import FusionBackbone
from ..models.heads import SegHead
from ..utils.bundles import read_manifest
from ..utils.checkpoints import load_checkpoint, save_checkpoint, state_checksum
from ..utils.errors import ConfigurationError, ContainerError, ContractViolation
from ..utils.run_config import RunConfig
from ..utils.seeding import Stream, rng_for, seed_everything, seed_torch
from ..utils.tables import write_table
from .losses import segmentation_loss
from .schedules import remember_base_lr, set_lr, step_decay
from .subsets import SubsetSampler

logger = logging.getLogger(__name__)

MODEL_DIR = "model"
TRAIN_LOG = "train_log.tsv"
BACKBONE_PREFIX = "backbone."


class FusionSegmenter(nn.Module):
    def __init__(self, backbone: FusionBackbone, head: SegHead):
        super().__init__()
        self.backbone = backbone
        self.head = head

    @classmethod
    def from_config(cls, cfg: RunConfig) -> "FusionSegmenter":
        flags = cfg.downstream
        backbone = FusionBackbone.from_config(cfg.model, cfg.data, use_lstm=not flags.no_lstm, isolate=not flags.no_mask)
        head = SegHead(cfg.model.dim, cfg.model.patch_size, cfg.data.num_classes, backbone.tokenizer.grid)
        return cls(backbone, head)

    @property
    def modalities(self):
        return self.backbone.modalities

    def forward(self, batch: Mapping[str, torch.Tensor], subset: Sequence[str]) -> torch.Tensor:
        return self.head(self.backbone(batch, subset).fusion_tokens)


def segment(model: FusionSegmenter, batch: Mapping[str, torch.Tensor], subset: Sequence[str]) -> torch.Tensor:
    """(B, K, H, W) logits from any non-empty modality subset."""
    if not subset:
        raise ContractViolation("cannot segment from an empty modality subset")
    return model(batch, subset)


@dataclass
class DownstreamResult:
    history: List[Dict[str, float]]
    checkpoint: Path
    log_path: Path
    backbone_checksum: str


def load_segmenter(directory: Path, cfg: Optional[RunConfig] = None) -> FusionSegmenter:
    """Rebuild a trained segmenter; the architecture comes from the config saved with it when present."""
    saved = read_manifest(directory).get("meta", {}).get("config")
    if saved is not None:
        cfg = RunConfig.model_validate(saved)
    if cfg is None:
        raise ConfigurationError(f"{directory} carries no config; pass one explicitly")
    model = FusionSegmenter.from_config(cfg)
    load_checkpoint(directory, model)
    model.eval()
    return model


class DownstreamTrainer:
    def __init__(self, cfg: RunConfig, train: TileDataset, output_dir: Optional[Path] = None):
        self.cfg = cfg
        self.settings = cfg.downstream
        self.train_set = train
        self.output_dir = Path(output_dir) if output_dir else cfg.output_path / "train"

        seed_everything(cfg.seed, cfg.workers)
        seed_torch(cfg.seed, Stream.INIT, 1)
        self.model = FusionSegmenter.from_config(cfg)
        if self.settings.mode != "scratch":
            self._load_pretrained()
        self.optimizer = self._build_optimizer()
        remember_base_lr(self.optimizer)
        self.sampler = SubsetSampler(self.model.modalities, random=self.settings.use_random_combination)

        batch = self.settings.batch_size
        self.steps_per_epoch = -(-len(train) // batch)
        self.total_steps = self.steps_per_epoch * self.settings.epochs

    def _load_pretrained(self) -> None:
        path = self.settings.pretrained
        if not path:
            raise ConfigurationError(f"mode '{self.settings.mode}' needs downstream.pretrained (a pretraining checkpoint)")
        if not Path(path).exists():
            raise ContainerError(f"pretraining checkpoint not found: {path}", name="pretrained")
        load_checkpoint(Path(path), self.model.backbone, prefix=BACKBONE_PREFIX)
        logger.info("Loaded pretrained backbone from %s", path)

    def _build_optimizer(self) -> torch.optim.Optimizer:
        settings = self.settings
        head = list(self.model.head.parameters())
        backbone = list(self.model.backbone.parameters())
        if settings.mode == "partial-finetune":
            for p in backbone:
                p.requires_grad_(False)
            groups = [{"params": head, "lr": settings.lr}]
        elif settings.mode == "full-finetune":
            groups = [
                {"params": backbone, "lr": settings.lr * settings.backbone_lr_mult},
                {"params": head, "lr": settings.lr},
            ]
        else:
            groups = [{"params": backbone + head, "lr": settings.lr}]
        return torch.optim.AdamW(groups, lr=settings.lr, weight_decay=settings.weight_decay)

    def train_epoch(self, epoch: int) -> float:
        self.model.train()
        data_rng = rng_for(self.cfg.seed, Stream.DATA_ORDER, 1000 + epoch)
        subset_rng = rng_for(self.cfg.seed, Stream.SUBSET, 1000 + epoch)
        total, count = 0.0, 0
        for index, batch in enumerate(self.train_set.iter_batches(self.settings.batch_size, data_rng)):
            global_step = (epoch - 1) * self.steps_per_epoch + index
            set_lr(self.optimizer, step_decay(global_step, self.total_steps, self.settings.lr_milestones, self.settings.lr_gamma))
            subset = self.sampler.sample_subset(subset_rng)
            logits = segment(self.model, batch, subset)
            loss = segmentation_loss(logits, batch["label"], self.settings.ce_weight, self.settings.dice_weight)

            self.optimizer.zero_grad(set_to_none=True)
            loss.backward()
            self.optimizer.step()
            total += float(loss)
            count += 1
        return total / count

    def run(self) -> DownstreamResult:
        self.output_dir.mkdir(parents=True, exist_ok=True)
        history = []
        progress = tqdm(range(1, self.settings.epochs + 1), desc=f"train[{self.settings.mode}]",
                        disable=self.cfg.quiet or not sys.stderr.isatty())
        for epoch in progress:
            loss = self.train_epoch(epoch)
            history.append({"epoch": epoch, "loss": loss})
            progress.set_postfix(loss=f"{loss:.4f}")
            logger.debug("train epoch %d loss=%.4f", epoch, loss)

        checksum = state_checksum(self.model.backbone)
        checkpoint = save_checkpoint(
            self.output_dir / MODEL_DIR, self.model,
            meta={"mode": self.settings.mode, "epochs": self.settings.epochs, "config": self.cfg.model_dump(mode="json")},
        )
        log_path = write_table(self.output_dir / TRAIN_LOG, history, columns=["epoch", "loss"])
        logger.info("Trained %s for %d epochs, final loss %.4f", self.settings.mode, self.settings.epochs, history[-1]["loss"])
        return DownstreamResult(history, checkpoint, log_path, checksum)
