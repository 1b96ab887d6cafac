"""
Training package

Pretraining (masking, losses, Pretrainer), downstream segmentation and evaluation.
"""

from .downstream import DownstreamResult, DownstreamTrainer, FusionSegmenter, load_segmenter, segment
from .evaluation import EvalReport, confusion_matrix, evaluate, iou_per_class, mean_iou, read_reports, write_reports
from .losses import LossReport, dice_loss, info_nce, reconstruction_loss, segmentation_loss, total_loss
from .masking import MaskPlan, allocate_budget, apply_mask_plan, sample_mask_plan
from .pretrainer import PretrainModel, PretrainResult, Pretrainer, alignment_report
from .schedules import step_decay, warmup_cosine
from .subsets import SubsetSampler, all_subsets, parse_subset, subset_label

__all__ = [
    "DownstreamResult",
    "DownstreamTrainer",
    "EvalReport",
    "FusionSegmenter",
    "LossReport",
    "MaskPlan",
    "PretrainModel",
    "PretrainResult",
    "Pretrainer",
    "SubsetSampler",
    "alignment_report",
    "all_subsets",
    "allocate_budget",
    "apply_mask_plan",
    "confusion_matrix",
    "dice_loss",
    "evaluate",
    "info_nce",
    "iou_per_class",
    "load_segmenter",
    "mean_iou",
    "parse_subset",
    "read_reports",
    "reconstruction_loss",
    "sample_mask_plan",
    "segment",
    "segmentation_loss",
    "step_decay",
    "subset_label",
    "total_loss",
    "warmup_cosine",
    "write_reports",
]
