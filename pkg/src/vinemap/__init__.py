"""Visible/infrared UAV image registration, segmentation fusion and
vine disease mapping."""

__version__ = "0.1.0"

from .fusion import DiseaseLabel, FusionMode, fuse_maps, fuse_pixel, symptom_mask
from .raster import Channel, TileGrid, extract_channel, normalize, stitch, tile
from .registration import (
    Homography,
    RegistrationConfig,
    RegistrationResult,
    register_pair,
    warp_image,
)
from .segmap import BaselineModel, ClassLabel, load_mask, predict, save_mask, train_baseline

__all__ = [
    "BaselineModel",
    "Channel",
    "ClassLabel",
    "DiseaseLabel",
    "FusionMode",
    "Homography",
    "RegistrationConfig",
    "RegistrationResult",
    "TileGrid",
    "__version__",
    "extract_channel",
    "fuse_maps",
    "fuse_pixel",
    "load_mask",
    "normalize",
    "predict",
    "register_pair",
    "save_mask",
    "stitch",
    "symptom_mask",
    "tile",
    "train_baseline",
    "warp_image",
]
