"""
Run configuration.

A run is fully described by a RunConfig plus its seed. The model is strict:
unknown keys are rejected and every precondition the operations rely on is
checked here, so the training code can assume a valid configuration.
"""

import json
from pathlib import Path
from typing import Any, Dict, List, Literal, Optional, Tuple

from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

import config
from .errors import ConfigurationError


class _Section(BaseModel):
    model_config = ConfigDict(extra="forbid", validate_assignment=True)


class NoiseConfig(_Section):
    """Per-modality corruption applied by the renderer (clamped, never rejected)."""

    optical_sigma: float = 0.08
    sar_speckle_looks: float = 4.0
    sar_floor_sigma: float = 0.02
    dem_sigma: float = 0.3
    map_flip_fraction: float = 0.25

    def clamped(self) -> "NoiseConfig":
        return NoiseConfig(
            optical_sigma=max(0.0, self.optical_sigma),
            sar_speckle_looks=max(0.0, self.sar_speckle_looks),
            sar_floor_sigma=max(0.0, self.sar_floor_sigma),
            dem_sigma=max(0.0, self.dem_sigma),
            map_flip_fraction=min(1.0, max(0.0, self.map_flip_fraction)),
        )


class DataConfig(_Section):
    root: Optional[str] = None
    num_samples: int = config.DEFAULT_NUM_SAMPLES
    tile_size: int = config.DEFAULT_TILE_SIZE
    num_classes: int = config.DEFAULT_NUM_CLASSES
    object_count_range: Tuple[int, int] = (2, 6)
    object_extent_range: Tuple[int, int] = (3, 10)
    split_ratios: Tuple[float, float, float] = config.DEFAULT_SPLIT_RATIOS
    noise: NoiseConfig = Field(default_factory=NoiseConfig)

    @field_validator("num_samples")
    @classmethod
    def _positive_samples(cls, value: int) -> int:
        if value < 1:
            raise ValueError("num_samples must be at least 1")
        return value

    @field_validator("num_classes")
    @classmethod
    def _enough_classes(cls, value: int) -> int:
        if value < 2:
            raise ValueError("num_classes (K) must be at least 2")
        return value

    @field_validator("object_count_range", "object_extent_range")
    @classmethod
    def _ordered_range(cls, value: Tuple[int, int]) -> Tuple[int, int]:
        low, high = value
        if low < 0 or high < low:
            raise ValueError(f"invalid range {value}")
        return value

    @field_validator("split_ratios")
    @classmethod
    def _ratios_sum_to_one(cls, value: Tuple[float, float, float]) -> Tuple[float, float, float]:
        if any(r <= 0 for r in value):
            raise ValueError("split ratios must be positive")
        if abs(sum(value) - 1.0) > 1e-9:
            raise ValueError(f"split ratios must sum to 1, got {sum(value)}")
        return value


class ModelConfig(_Section):
    modalities: List[str] = Field(default_factory=lambda: list(config.MODALITIES))
    dim: int = 64
    patch_size: int = config.DEFAULT_PATCH_SIZE
    depth: int = 4
    heads: int = 4
    mlp_ratio: float = 4.0
    map_embed_dim: int = 16
    decoder_dim: int = 32
    decoder_depth: int = 2
    decoder_heads: int = 2
    contrastive_dim: int = 32
    omega: float = 10000.0

    @field_validator("modalities")
    @classmethod
    def _canonical_modalities(cls, value: List[str]) -> List[str]:
        unknown = [m for m in value if m not in config.MODALITIES]
        if unknown:
            raise ValueError(f"unknown modalities {unknown}")
        if not value:
            raise ValueError("at least one modality is required")
        return [m for m in config.MODALITIES if m in value]

    @model_validator(mode="after")
    def _check_dims(self) -> "ModelConfig":
        if self.dim % 4:
            raise ValueError("dim must be divisible by 4 (two even sincos halves)")
        if self.dim % self.heads:
            raise ValueError("heads must divide dim")
        if self.decoder_dim % self.decoder_heads:
            raise ValueError("decoder_heads must divide decoder_dim")
        if self.depth < 0 or self.decoder_depth < 0:
            raise ValueError("depth must be non-negative")
        if self.omega <= 0:
            raise ValueError("omega must be positive")
        return self


class PretrainConfig(_Section):
    """Masked multimodal pretraining.

    ``lr`` defaults to 1e-3 for the small default model; ViT-B-sized backbones
    are usually pretrained at 1e-4 (pass ``--pretrain.lr 1e-4`` for that).
    """

    alpha: float = 1.0
    budget: int = 20
    lambda_2: float = 1.0
    tau: float = 0.07
    epochs: int = 50
    batch_size: int = 16
    lr: float = 1e-3
    weight_decay: float = 0.05
    warmup_fraction: float = 40 / 1600
    random_combo: bool = False
    checkpoint_every: int = 10
    grad_clip: Optional[float] = 1.0

    @model_validator(mode="after")
    def _check(self) -> "PretrainConfig":
        if self.alpha <= 0:
            raise ValueError("alpha must be positive")
        if self.tau <= 0:
            raise ValueError("tau must be positive")
        if self.budget < 0:
            raise ValueError("budget must be non-negative")
        if self.lambda_2 < 0:
            raise ValueError("lambda_2 must be non-negative")
        if self.lambda_2 > 0 and self.batch_size < 2:
            raise ValueError("contrastive pretraining needs batch_size >= 2")
        _check_optimisation(self.epochs, self.batch_size, self.lr)
        if not 0.0 <= self.warmup_fraction < 1.0:
            raise ValueError("warmup_fraction must be in [0, 1)")
        return self


class DownstreamConfig(_Section):
    mode: Literal["scratch", "full-finetune", "partial-finetune"] = "scratch"
    pretrained: Optional[str] = None
    random_combo: bool = True
    no_lstm: bool = False
    no_random: bool = False
    no_mask: bool = False
    epochs: int = 50
    batch_size: int = 10
    lr: float = 1e-3
    weight_decay: float = 0.05
    backbone_lr_mult: float = 0.1
    lr_milestones: Tuple[float, float] = (0.9, 0.95)
    lr_gamma: float = 0.1
    ce_weight: float = 1.0
    dice_weight: float = 1.0

    @model_validator(mode="after")
    def _check(self) -> "DownstreamConfig":
        _check_optimisation(self.epochs, self.batch_size, self.lr)
        return self

    @property
    def use_random_combination(self) -> bool:
        return self.random_combo and not self.no_random


class AblateConfig(_Section):
    cells: List[str] = Field(default_factory=lambda: list(config.DEFAULT_ABLATION_CELLS))


class RunConfig(_Section):
    seed: int = config.DEFAULT_SEED
    workers: int = 1
    output_dir: Optional[str] = None
    quiet: bool = False
    data: DataConfig = Field(default_factory=DataConfig)
    model: ModelConfig = Field(default_factory=ModelConfig)
    pretrain: PretrainConfig = Field(default_factory=PretrainConfig)
    downstream: DownstreamConfig = Field(default_factory=DownstreamConfig)
    ablate: AblateConfig = Field(default_factory=AblateConfig)

    @model_validator(mode="after")
    def _check_geometry(self) -> "RunConfig":
        if self.data.tile_size % self.model.patch_size:
            raise ValueError(
                f"tile_size {self.data.tile_size} is not divisible by patch_size {self.model.patch_size}"
            )
        if self.workers < 1:
            raise ValueError("workers must be at least 1")
        num_patches = (self.data.tile_size // self.model.patch_size) ** 2
        if self.pretrain.budget > num_patches * len(self.model.modalities):
            raise ValueError("pretrain.budget exceeds the number of modality tokens")
        return self

    @property
    def output_path(self) -> Path:
        return Path(self.output_dir) if self.output_dir else config.OUTPUT_ROOT

    @property
    def data_path(self) -> Path:
        return Path(self.data.root) if self.data.root else config.DATA_ROOT

    @property
    def num_patches(self) -> int:
        return (self.data.tile_size // self.model.patch_size) ** 2


def _check_optimisation(epochs: int, batch_size: int, lr: float) -> None:
    if epochs < 1:
        raise ValueError("epochs must be at least 1")
    if batch_size < 1:
        raise ValueError("batch_size must be at least 1")
    if lr <= 0:
        raise ValueError("lr must be positive")


def build_config(data: Optional[Dict[str, Any]] = None, overrides: Optional[Dict[str, Any]] = None) -> RunConfig:
    """Validate a config dict, applying dotted-key overrides on top."""
    merged = json.loads(json.dumps(data or {}))
    for dotted, value in (overrides or {}).items():
        node = merged
        *parents, leaf = dotted.split(".")
        for key in parents:
            node = node.setdefault(key, {})
            if not isinstance(node, dict):
                raise ConfigurationError(f"cannot override '{dotted}': '{key}' is not a section")
        node[leaf] = value
    try:
        return RunConfig.model_validate(merged)
    except ValidationError as e:
        raise ConfigurationError(f"invalid configuration:\n{e}") from e


def load_config(path: Optional[Path] = None, overrides: Optional[Dict[str, Any]] = None) -> RunConfig:
    """Load a JSON config file (optional) and apply overrides; flags > file > defaults."""
    data: Dict[str, Any] = {}
    if path is not None:
        path = Path(path)
        if not path.exists():
            raise ConfigurationError(f"config file not found: {path}")
        try:
            data = json.loads(path.read_text())
        except json.JSONDecodeError as e:
            raise ConfigurationError(f"config file {path} is not valid JSON: {e}") from e
    return build_config(data, overrides)


def config_fields(model: type = RunConfig, prefix: str = "") -> Dict[str, Any]:
    """Map every leaf field to its annotation, keyed by dotted path."""
    fields: Dict[str, Any] = {}
    for name, info in model.model_fields.items():
        annotation = info.annotation
        if isinstance(annotation, type) and issubclass(annotation, BaseModel):
            fields.update(config_fields(annotation, f"{prefix}{name}."))
        else:
            fields[f"{prefix}{name}"] = annotation
    return fields
