"""Homography estimation and infrared-to-visible registration."""

from .homography import Homography, alignment_rmse, fit_homography, viable
from .pipeline import FeatureParams, RegistrationConfig, RegistrationResult, register_pair
from .ransac import estimate_ransac
from .warp import warp_image, warp_labels

__all__ = [
    "FeatureParams",
    "Homography",
    "RegistrationConfig",
    "RegistrationResult",
    "alignment_rmse",
    "estimate_ransac",
    "fit_homography",
    "register_pair",
    "viable",
    "warp_image",
    "warp_labels",
]
