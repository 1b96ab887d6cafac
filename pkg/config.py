"""
Configuration settings for the Incomplete Multimodal Fusion toolkit.
"""

import os
from pathlib import Path

from dotenv import load_dotenv

# Load environment variables
load_dotenv()

# Project paths
PROJECT_ROOT = Path(__file__).parent
SRC_DIR = PROJECT_ROOT / "src"
TESTS_DIR = PROJECT_ROOT / "tests"

# Environment variables
OUTPUT_ROOT = Path(os.getenv("IMFUSION_OUTPUT_ROOT", PROJECT_ROOT / "runs"))
DATA_ROOT = Path(os.getenv("IMFUSION_DATA_ROOT", OUTPUT_ROOT / "dataset"))
LOG_LEVEL = os.getenv("IMFUSION_LOG_LEVEL", "INFO")

# Modalities, in canonical sequence order
MODALITIES = ("optical", "sar", "dem", "map")

# Raster channels per modality (the map is a single integer band)
MODALITY_CHANNELS = {
    "optical": 3,
    "sar": 2,
    "dem": 1,
    "map": 1,
}

# Rasters stored in every sample directory
SAMPLE_RASTERS = MODALITIES + ("label",)

# Default settings
DEFAULT_SEED = 0
DEFAULT_TILE_SIZE = 32
DEFAULT_PATCH_SIZE = 8
DEFAULT_NUM_CLASSES = 5
DEFAULT_NUM_SAMPLES = 640
DEFAULT_SPLIT_RATIOS = (0.8, 0.1, 0.1)

# Optical base colours, cycled over classes
OPTICAL_PALETTE = [
    (0.20, 0.45, 0.20),
    (0.65, 0.60, 0.35),
    (0.30, 0.35, 0.70),
]

# Elevation of one height level (classes are grouped into levels)
HEIGHT_LEVEL_STEP = 3.0

# SAR cross-polarised roughness per class, cycled
SAR_ROUGHNESS = [0.2, 1.0, 0.6, 1.4]

# Ablation cells run by `main.py ablate`
DEFAULT_ABLATION_CELLS = [
    "full",
    "no_lstm",
    "no_random",
    "no_mask",
    "partial_finetune",
    "full_finetune",
]

# Exit codes
EXIT_OK = 0
EXIT_CONTRACT = 1
EXIT_IO = 2
