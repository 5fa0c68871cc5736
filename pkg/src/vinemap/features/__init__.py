"""Nonlinear scale-space features: detection, description, matching."""

from .descriptor import DESCRIPTOR_BITS, DESCRIPTOR_BYTES, describe
from .detector import Keypoint, detect
from .matching import Match, hamming_matrix, keypoints_to_dicts, match, matches_to_dicts
from .scale_space import ScaleLevel, ScaleSpace, build_scale_space, fed_tau_cycle

__all__ = [
    "DESCRIPTOR_BITS",
    "DESCRIPTOR_BYTES",
    "Keypoint",
    "Match",
    "ScaleLevel",
    "ScaleSpace",
    "build_scale_space",
    "describe",
    "detect",
    "fed_tau_cycle",
    "hamming_matrix",
    "keypoints_to_dicts",
    "match",
    "matches_to_dicts",
]
