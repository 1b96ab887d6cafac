"""
Self-supervised pretraining: masked multimodal reconstruction plus contrastive
alignment of every modality vector with the fusion vector.

One step: draw a subset (when random combination is on) -> tokenize -> draw a
Dirichlet mask plan -> encode the visible tokens -> read out -> decode every
modality from the fusion tokens -> total loss -> AdamW step.
"""

import logging
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional

import numpy as np
import torch
from torch import nn
from tqdm import tqdm

from ..generators.dataset import TileDataset
from ..models.decoders import build_decoders, reconstruct
from ..models.encoder import FusionBackbone
from ..models.heads import FUSION_KEY, ContrastiveHeads
from ..utils.checkpoints import load_checkpoint, save_checkpoint
from ..utils.run_config import RunConfig
from ..utils.seeding import Stream, rng_for, seed_everything, seed_torch
from ..utils.tables import append_rows, truncate_after, write_table
from .losses import LossReport, info_nce, reconstruction_loss, total_loss
from .masking import apply_mask_plan, sample_mask_plan
from .schedules import remember_base_lr, set_lr, warmup_cosine
from .subsets import SubsetSampler

logger = logging.getLogger(__name__)

LOSSES_FILE = "losses.tsv"
ALIGNMENT_FILE = "alignment.tsv"
CHECKPOINT_DIR = "checkpoints"
PRETRAINED_DIR = "pretrained"


class PretrainModel(nn.Module):
    """Backbone plus the pretraining-only decoders and contrastive heads."""

    def __init__(self, backbone: FusionBackbone, decoders: nn.ModuleDict, heads: ContrastiveHeads):
        super().__init__()
        self.backbone = backbone
        self.decoders = decoders
        self.heads = heads

    @classmethod
    def from_config(cls, cfg: RunConfig) -> "PretrainModel":
        backbone = FusionBackbone.from_config(cfg.model, cfg.data)
        model = cfg.model
        decoders = build_decoders(
            backbone.modalities, model.dim, model.decoder_dim, model.decoder_depth, model.decoder_heads,
            model.patch_size, backbone.tokenizer.grid, cfg.data.num_classes,
        )
        heads = ContrastiveHeads(backbone.modalities, model.dim, model.contrastive_dim)
        return cls(backbone, decoders, heads)

    @property
    def modalities(self):
        return self.backbone.modalities


@dataclass
class PretrainResult:
    history: List[Dict[str, float]]
    checkpoint: Path
    losses_path: Path
    alignment: Dict[str, Dict[str, float]] = field(default_factory=dict)
    alignment_path: Optional[Path] = None


def alignment_report(model: PretrainModel, dataset: TileDataset, batch_size: int = 64) -> Dict[str, Dict[str, float]]:
    """Mean positive-pair and mean negative-pair cosine similarity between g_m(o_m) and g_f(o_f).

    Uses the full modality set without masking; negatives are every other
    sample of the split.
    """
    model.eval()
    projected: Dict[str, List[torch.Tensor]] = {}
    with torch.no_grad():
        for batch in dataset.iter_batches(batch_size):
            z = model.heads(model.backbone(batch, model.modalities))
            for name, value in z.items():
                projected.setdefault(name, []).append(nn.functional.normalize(value, dim=-1))
    fusion = torch.cat(projected.pop(FUSION_KEY))
    n = fusion.shape[0]
    off_diagonal = ~torch.eye(n, dtype=torch.bool)

    report = {}
    for name in model.modalities:
        similarity = torch.cat(projected[name]) @ fusion.transpose(0, 1)
        positive = float(similarity.diagonal().mean())
        negative = float(similarity[off_diagonal].mean()) if n > 1 else float("nan")
        report[name] = {"positive": positive, "negative": negative, "gap": positive - negative}
    model.train()
    return report


class Pretrainer:
    def __init__(self, cfg: RunConfig, train: TileDataset, val: Optional[TileDataset] = None,
                 output_dir: Optional[Path] = None):
        self.cfg = cfg
        self.train_set = train
        self.val_set = val
        self.output_dir = Path(output_dir) if output_dir else cfg.output_path / "pretrain"
        self.settings = cfg.pretrain

        seed_everything(cfg.seed, cfg.workers)
        seed_torch(cfg.seed, Stream.INIT)
        self.model = PretrainModel.from_config(cfg)
        self.optimizer = torch.optim.AdamW(
            self.model.parameters(), lr=self.settings.lr, weight_decay=self.settings.weight_decay
        )
        remember_base_lr(self.optimizer)
        self.sampler = SubsetSampler(self.model.modalities, random=self.settings.random_combo)

        batch = self.settings.batch_size
        self.steps_per_epoch = max(1, len(train) // batch) if len(train) >= batch else 1
        self.total_steps = self.steps_per_epoch * self.settings.epochs
        self.warmup_steps = int(round(self.settings.warmup_fraction * self.total_steps))

    @property
    def losses_path(self) -> Path:
        return self.output_dir / LOSSES_FILE

    def step(self, batch: Dict[str, torch.Tensor], mask_rng: np.random.Generator,
             subset_rng: np.random.Generator, step: Optional[int] = None) -> LossReport:
        """Forward pass and loss for one batch (no optimizer update)."""
        settings = self.settings
        backbone = self.model.backbone
        subset = self.sampler.sample_subset(subset_rng)

        sequence, layout = backbone.tokenizer(batch, subset)
        token_counts = {name: layout.spans[name][1] for name in layout.modalities}
        budget = min(settings.budget, sum(token_counts.values()))
        plan = sample_mask_plan(mask_rng, settings.alpha, budget, token_counts)
        visible, visible_layout = apply_mask_plan(sequence, layout, plan)
        readout = backbone.encoder(visible, visible_layout)

        reconstructions = reconstruct(readout.fusion_tokens, self.model.decoders)
        num_patches = backbone.tokenizer.num_patches
        masked = {name: plan.masked_patches(name, num_patches) for name in self.model.modalities}
        terms = reconstruction_loss(reconstructions, batch, masked, backbone.tokenizer.patch_size)

        contrastive: Dict[str, torch.Tensor] = {}
        if settings.lambda_2 > 0 and batch["label"].shape[0] >= 2:
            z = self.model.heads(readout)
            for name in readout.modality_vectors:
                contrastive[name] = info_nce(z[name], z[FUSION_KEY], settings.tau)
        else:
            contrastive = {name: terms["dem"].new_zeros(()) for name in readout.modality_vectors}
        return total_loss(terms, contrastive, settings.lambda_2, step)

    def train_epoch(self, epoch: int) -> Dict[str, float]:
        self.model.train()
        seed = self.cfg.seed
        data_rng = rng_for(seed, Stream.DATA_ORDER, epoch)
        mask_rng = rng_for(seed, Stream.MASK_PLAN, epoch)
        subset_rng = rng_for(seed, Stream.SUBSET, epoch)

        sums: Dict[str, float] = {}
        count = 0
        for index, batch in enumerate(self.train_set.iter_batches(self.settings.batch_size, data_rng, drop_last=True)):
            global_step = (epoch - 1) * self.steps_per_epoch + index
            set_lr(self.optimizer, warmup_cosine(global_step, self.total_steps, self.warmup_steps))
            report = self.step(batch, mask_rng, subset_rng, global_step)

            self.optimizer.zero_grad(set_to_none=True)
            report.total.backward()
            if self.settings.grad_clip:
                nn.utils.clip_grad_norm_(self.model.parameters(), self.settings.grad_clip)
            self.optimizer.step()

            for term, value in report.as_dict().items():
                sums[term] = sums.get(term, 0.0) + value
            count += 1
        return {term: value / count for term, value in sums.items()}

    def checkpoint_path(self, epoch: int) -> Path:
        return self.output_dir / CHECKPOINT_DIR / f"epoch_{epoch:04d}"

    def latest_checkpoint(self) -> Optional[Path]:
        directory = self.output_dir / CHECKPOINT_DIR
        found = sorted(p for p in directory.glob("epoch_*") if (p / "manifest.json").exists()) if directory.exists() else []
        return found[-1] if found else None

    def save(self, epoch: int) -> Path:
        return save_checkpoint(self.checkpoint_path(epoch), self.model, self.optimizer, meta={"epoch": epoch})

    def resume(self) -> int:
        """Restore the latest epoch checkpoint; returns the last completed epoch (0 when none)."""
        latest = self.latest_checkpoint()
        if latest is None:
            logger.info("No checkpoint under %s, starting from scratch", self.output_dir)
            return 0
        meta = load_checkpoint(latest, self.model, self.optimizer)
        epoch = int(meta["epoch"])
        truncate_after(self.losses_path, "epoch", epoch)
        logger.info("Resumed from %s (epoch %d)", latest, epoch)
        return epoch

    def run(self, resume: bool = False, stop_after: Optional[int] = None) -> PretrainResult:
        """Train up to ``settings.epochs`` (or ``stop_after``) epochs, writing losses and checkpoints."""
        self.output_dir.mkdir(parents=True, exist_ok=True)
        start = self.resume() + 1 if resume else 1
        if not resume and self.losses_path.exists():
            self.losses_path.unlink()
        last = min(self.settings.epochs, stop_after) if stop_after else self.settings.epochs

        history = []
        progress = tqdm(range(start, last + 1), desc="pretrain", disable=self.cfg.quiet or not sys.stderr.isatty())
        for epoch in progress:
            means = self.train_epoch(epoch)
            history.append({"epoch": epoch, **means})
            append_rows(self.losses_path, [{"epoch": epoch, "term": t, "value": v} for t, v in means.items()],
                        columns=["epoch", "term", "value"])
            progress.set_postfix(total=f"{means['total']:.4f}")
            logger.info("pretrain epoch %d/%d total=%.4f", epoch, self.settings.epochs, means["total"])
            if epoch % self.settings.checkpoint_every == 0 or epoch == last:
                self.save(epoch)

        pretrained = save_checkpoint(self.output_dir / PRETRAINED_DIR, self.model, meta={"epoch": last})
        result = PretrainResult(history, pretrained, self.losses_path)
        if self.val_set is not None and len(self.val_set) >= 2:
            result.alignment = alignment_report(self.model, self.val_set)
            result.alignment_path = write_table(
                self.output_dir / ALIGNMENT_FILE,
                [{"modality": m, **values} for m, values in result.alignment.items()],
                columns=["modality", "positive", "negative", "gap"],
            )
        return result
