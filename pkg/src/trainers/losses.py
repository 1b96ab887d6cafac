"""
Pretraining and segmentation losses.

Reconstruction terms only count masked patches:

    L_DEM     = mean |dem_hat - dem|                over masked dem patches
    L_SAR_RGB = mse(sar) + mse(optical)             over masked patches of each
    L_MAP     = cross-entropy(map logits, map)      over masked map patches

Contrastive alignment uses InfoNCE between a modality projection and the
fusion projection, with the other fusion vectors of the batch as negatives.
"""

import math
from dataclasses import dataclass, field
from typing import Dict, Mapping, Optional

import torch
import torch.nn.functional as F

from ..models.tokenizer import patchify
from ..utils.errors import ContractViolation, DivergenceError

RECONSTRUCTION_TERMS = ("dem", "sar_rgb", "map")


@dataclass
class LossReport:
    dem: torch.Tensor
    sar_rgb: torch.Tensor
    map: torch.Tensor
    contrastive: Dict[str, torch.Tensor] = field(default_factory=dict)
    lambda_2: float = 1.0
    total: Optional[torch.Tensor] = None

    def as_dict(self) -> Dict[str, float]:
        values = {"dem": float(self.dem), "sar_rgb": float(self.sar_rgb), "map": float(self.map)}
        values.update({f"contrastive_{name}": float(v) for name, v in self.contrastive.items()})
        if self.total is not None:
            values["total"] = float(self.total)
        return values


def _masked_patch_mean(per_patch: torch.Tensor, masked: torch.Tensor) -> torch.Tensor:
    """Mean of (B, L, n) values over the masked patches (L,)."""
    if not bool(masked.any()):
        return per_patch.new_zeros(())
    return per_patch[:, masked.to(per_patch.device)].mean()


def _check_shapes(name: str, prediction: torch.Tensor, target: torch.Tensor) -> None:
    if prediction.shape[-2:] != target.shape[-2:] or prediction.shape[0] != target.shape[0]:
        raise ContractViolation(
            f"{name}: reconstruction {tuple(prediction.shape)} does not match target {tuple(target.shape)}"
        )


def reconstruction_loss(reconstructions: Mapping[str, torch.Tensor],
                        targets: Mapping[str, torch.Tensor],
                        masked: Mapping[str, torch.Tensor],
                        patch_size: int) -> Dict[str, torch.Tensor]:
    """Masked-only reconstruction terms; ``masked[m]`` is the (L,) target-patch flag of modality m."""
    if not reconstructions:
        raise ContractViolation("nothing to reconstruct")
    zero = next(iter(reconstructions.values())).new_zeros(())
    terms = {name: zero for name in RECONSTRUCTION_TERMS}

    for name, prediction in reconstructions.items():
        if name not in targets or name not in masked:
            raise ContractViolation(f"no target or mask plan for reconstructed modality '{name}'")
        target = targets[name]
        _check_shapes(name, prediction, target)
        if name == "map":
            per_pixel = F.cross_entropy(prediction, target[:, 0].long(), reduction="none").unsqueeze(1)
            per_patch = patchify(per_pixel, patch_size).patches
        else:
            if prediction.shape != target.shape:
                raise ContractViolation(
                    f"{name}: reconstruction {tuple(prediction.shape)} does not match target {tuple(target.shape)}"
                )
            error = (prediction - target).abs() if name == "dem" else (prediction - target) ** 2
            per_patch = patchify(error, patch_size).patches
        if per_patch.shape[1] != masked[name].shape[0]:
            raise ContractViolation(f"{name}: mask covers {masked[name].shape[0]} patches, raster has {per_patch.shape[1]}")

        value = _masked_patch_mean(per_patch, masked[name])
        if name in ("sar", "optical"):
            terms["sar_rgb"] = terms["sar_rgb"] + value
        else:
            terms[name] = value
    return terms


def info_nce(z_anchor: torch.Tensor, z_fusion: torch.Tensor, tau: float) -> torch.Tensor:
    """L_c = -mean_i log softmax_j(cos(z_anchor_i, z_fusion_j) / tau)[i]."""
    if z_anchor.shape != z_fusion.shape or z_anchor.dim() != 2:
        raise ContractViolation(f"info_nce needs two (N, d) batches, got {tuple(z_anchor.shape)} and {tuple(z_fusion.shape)}")
    if z_anchor.shape[0] < 2:
        raise ContractViolation("info_nce needs a batch of at least 2")
    if tau <= 0:
        raise ContractViolation(f"temperature must be positive, got {tau}")
    anchor_norm = z_anchor.norm(dim=-1, keepdim=True)
    fusion_norm = z_fusion.norm(dim=-1, keepdim=True)
    if bool((anchor_norm == 0).any()) or bool((fusion_norm == 0).any()):
        raise ContractViolation("cosine similarity is undefined for a zero vector")
    similarity = (z_anchor / anchor_norm) @ (z_fusion / fusion_norm).transpose(0, 1)
    targets = torch.arange(z_anchor.shape[0], device=z_anchor.device)
    return F.cross_entropy(similarity / tau, targets)


def total_loss(terms: Mapping[str, torch.Tensor], contrastive: Mapping[str, torch.Tensor],
               lambda_2: float, step: Optional[int] = None) -> LossReport:
    """L = L_DEM + L_SAR_RGB + L_MAP + lambda_2 * sum of the present contrastive terms."""
    for name, value in list(terms.items()) + [(f"contrastive_{m}", v) for m, v in contrastive.items()]:
        value = float(value.detach())
        if not math.isfinite(value):
            raise DivergenceError(name, value, step)
    total = terms["dem"] + terms["sar_rgb"] + terms["map"]
    if contrastive:
        total = total + lambda_2 * sum(contrastive.values())
    if not math.isfinite(float(total.detach())):
        raise DivergenceError("total", float(total.detach()), step)
    return LossReport(terms["dem"], terms["sar_rgb"], terms["map"], dict(contrastive), lambda_2, total)


def dice_loss(logits: torch.Tensor, label: torch.Tensor, smooth: float = 1.0) -> torch.Tensor:
    """1 - mean over classes of (2|P∩T| + s) / (|P| + |T| + s), pooled over the batch."""
    probs = logits.softmax(dim=1)
    one_hot = F.one_hot(label, logits.shape[1]).permute(0, 3, 1, 2).to(probs.dtype)
    dims = (0, 2, 3)
    intersection = (probs * one_hot).sum(dims)
    cardinality = probs.sum(dims) + one_hot.sum(dims)
    return 1.0 - ((2.0 * intersection + smooth) / (cardinality + smooth)).mean()


def segmentation_loss(logits: torch.Tensor, label: torch.Tensor, ce_weight: float = 1.0,
                      dice_weight: float = 1.0, smooth: float = 1.0) -> torch.Tensor:
    """Weighted cross-entropy plus soft dice; ``label`` is (B, H, W) or (B, 1, H, W)."""
    if label.dim() == 4:
        label = label[:, 0]
    label = label.long()
    if logits.shape[0] != label.shape[0] or logits.shape[-2:] != label.shape[-2:]:
        raise ContractViolation(f"logits {tuple(logits.shape)} do not match label {tuple(label.shape)}")
    num_classes = logits.shape[1]
    if bool((label < 0).any()) or bool((label >= num_classes).any()):
        raise ContractViolation(f"label ids must lie in [0, {num_classes})")
    loss = logits.new_zeros(())
    if ce_weight:
        loss = loss + ce_weight * F.cross_entropy(logits, label)
    if dice_weight:
        loss = loss + dice_weight * dice_loss(logits, label, smooth)
    return loss
