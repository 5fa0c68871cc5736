"""Pixel-wise fusion of registered visible/infrared class maps.

The six-class disease map records where each modality saw symptoms:
both (intersection), infrared only, visible only, or neither (the
visible label wins the non-symptom cases, since the visible segmentation
is the more reliable colorimetric source).
"""

from __future__ import annotations

from enum import IntEnum

import numpy as np

from .errors import ContractError
from .raster import channel_count, quantize
from .segmap import ClassLabel


class DiseaseLabel(IntEnum):
    SHADOW = 0
    GROUND = 1
    HEALTHY = 2
    SYMPTOM_VISIBLE = 3
    SYMPTOM_INFRARED = 4
    SYMPTOM_INTERSECTION = 5


class FusionMode(IntEnum):
    INTERSECTION = 0  # "Fusion AND"
    UNION = 1  # "Fusion OR"


DISEASE_PALETTE = {
    DiseaseLabel.SHADOW: (0, 0, 0),
    DiseaseLabel.GROUND: (139, 69, 19),
    DiseaseLabel.HEALTHY: (0, 128, 0),
    DiseaseLabel.SYMPTOM_VISIBLE: (255, 255, 0),
    DiseaseLabel.SYMPTOM_INFRARED: (255, 140, 0),
    DiseaseLabel.SYMPTOM_INTERSECTION: (255, 0, 0),
}

# Disease code a visible-only pixel maps to (no usable infrared data).
_VISIBLE_FALLBACK = np.array(
    [
        int(DiseaseLabel.SHADOW),
        int(DiseaseLabel.GROUND),
        int(DiseaseLabel.HEALTHY),
        int(DiseaseLabel.SYMPTOM_VISIBLE),
    ],
    dtype=np.uint8,
)


def _build_fusion_table() -> np.ndarray:
    table = np.zeros((4, 4), dtype=np.uint8)
    sym = int(ClassLabel.SYMPTOM)
    for v in range(4):
        for i in range(4):
            if v == sym and i == sym:
                table[v, i] = int(DiseaseLabel.SYMPTOM_INTERSECTION)
            elif i == sym:
                table[v, i] = int(DiseaseLabel.SYMPTOM_INFRARED)
            elif v == sym:
                table[v, i] = int(DiseaseLabel.SYMPTOM_VISIBLE)
            else:
                table[v, i] = _VISIBLE_FALLBACK[v]
    return table


FUSION_TABLE = _build_fusion_table()


def fuse_pixel(v: ClassLabel | int, i: ClassLabel | int) -> DiseaseLabel:
    """Fusion rule for one (visible, infrared) label combination."""
    return DiseaseLabel(int(FUSION_TABLE[int(v), int(i)]))


def fuse_maps(
    vis_map: np.ndarray,
    ir_map: np.ndarray,
    ir_valid: np.ndarray | None = None,
) -> np.ndarray:
    """Pixel-wise fusion of two registered 4-class maps.

    ``ir_valid`` marks pixels with real infrared coverage (the warp
    validity mask); outside it the visible label decides alone.
    """
    vis_map = np.asarray(vis_map)
    ir_map = np.asarray(ir_map)
    if vis_map.shape != ir_map.shape:
        raise ContractError(f"map dimensions differ: {vis_map.shape} vs {ir_map.shape}")
    out = FUSION_TABLE[vis_map, ir_map]
    if ir_valid is not None:
        if ir_valid.shape != vis_map.shape:
            raise ContractError("validity mask dimensions differ from the maps")
        out = np.where(ir_valid, out, _VISIBLE_FALLBACK[vis_map])
    return out


def symptom_mask(disease_map: np.ndarray, mode: FusionMode) -> np.ndarray:
    """Binary symptom raster under the AND (intersection) / OR (union) rule."""
    d = np.asarray(disease_map)
    if mode == FusionMode.INTERSECTION:
        return d == int(DiseaseLabel.SYMPTOM_INTERSECTION)
    return (
        (d == int(DiseaseLabel.SYMPTOM_VISIBLE))
        | (d == int(DiseaseLabel.SYMPTOM_INFRARED))
        | (d == int(DiseaseLabel.SYMPTOM_INTERSECTION))
    )


def render_overlay(disease_map: np.ndarray, vis: np.ndarray, alpha: float = 0.5) -> np.ndarray:
    """Disease palette alpha-blended over the visible raster (for reports)."""
    if channel_count(vis) != 3:
        raise ContractError("overlay needs an RGB visible raster")
    if disease_map.shape != vis.shape[:2]:
        raise ContractError("disease map and visible raster dimensions differ")
    palette = np.zeros((len(DiseaseLabel), 3), dtype=np.float64)
    for label, rgb in DISEASE_PALETTE.items():
        palette[int(label)] = rgb
    colors = palette[disease_map]
    return quantize((1.0 - alpha) * vis.astype(np.float64) + alpha * colors)
