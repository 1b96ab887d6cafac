"""
Learning-rate schedules as per-step multipliers.

Each optimizer param group keeps its own ``base_lr`` (so backbone and head
groups can differ) and the trainer sets ``lr = base_lr * factor(step)`` before
every step. A schedule is then a pure function of the step, which makes
resuming from a checkpoint exact.
"""

import math
from typing import Sequence

import torch


def warmup_cosine(step: int, total_steps: int, warmup_steps: int) -> float:
    """Linear warmup to 1, then cosine decay to 0 at ``total_steps``."""
    if warmup_steps > 0 and step < warmup_steps:
        return (step + 1) / warmup_steps
    span = max(1, total_steps - warmup_steps)
    progress = min(1.0, (step - warmup_steps) / span)
    return 0.5 * (1.0 + math.cos(math.pi * progress))


def step_decay(step: int, total_steps: int, milestones: Sequence[float] = (0.9, 0.95), gamma: float = 0.1) -> float:
    """Multiply by ``gamma`` at each milestone, given as a fraction of the total steps."""
    passed = sum(1 for m in milestones if step >= int(m * total_steps))
    return gamma ** passed


def remember_base_lr(optimizer: torch.optim.Optimizer) -> None:
    for group in optimizer.param_groups:
        group.setdefault("base_lr", group["lr"])


def set_lr(optimizer: torch.optim.Optimizer, factor: float) -> None:
    for group in optimizer.param_groups:
        group["lr"] = group["base_lr"] * factor
