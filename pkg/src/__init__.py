"""
Incomplete Multimodal Fusion

A desk-scale fusion Transformer for co-registered raster modalities that keeps
working when any subset of them is missing: learned fusion tokens fed by a
Bi-LSTM attention block, modality-isolating masked attention, masked
reconstruction plus contrastive pretraining, and random-modality-combination
segmentation training.
"""

__version__ = "1.0.0"
__author__ = "Incomplete Multimodal Fusion"
__description__ = "Fusion Transformer pretraining and missing-modality segmentation on synthetic rasters"
