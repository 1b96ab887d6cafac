"""
Utils package

Errors, run configuration, seeding, the tensor-bundle container, checkpoints,
tables and plots.
"""

from .bundles import read_bundle, read_manifest, write_bundle
from .checkpoints import load_checkpoint, load_state, save_checkpoint, state_checksum
from .errors import ConfigurationError, ContainerError, ContractViolation, DivergenceError, ImfusionError
from .run_config import RunConfig, build_config, config_fields, load_config
from .seeding import Stream, derived_seed, rng_for, seed_everything, seed_torch
from .tables import append_rows, comparison_table, read_table, write_table

__all__ = [
    "ConfigurationError",
    "ContainerError",
    "ContractViolation",
    "DivergenceError",
    "ImfusionError",
    "RunConfig",
    "Stream",
    "append_rows",
    "build_config",
    "comparison_table",
    "config_fields",
    "derived_seed",
    "load_checkpoint",
    "load_config",
    "load_state",
    "read_bundle",
    "read_manifest",
    "read_table",
    "rng_for",
    "save_checkpoint",
    "seed_everything",
    "seed_torch",
    "state_checksum",
    "write_bundle",
    "write_table",
]
