"""Synthetic vineyard test data with known ground truth.

Scenes are rendered as vinerow stripe textures over four classes
(shadow / ground / healthy / symptom).  The visible frame crops the
scene; the pseudo-infrared frame samples the scene's NIR rendering
through a randomly drawn ground-truth homography (translation <= 30 px,
rotation <= 5 deg, |h20|,|h21| <= 1e-5), so registration error is
measurable exactly.  Both modalities share the same spatial detail
field, which is what makes cross-modality feature matching possible;
their intensities are related only by a monotone nonlinear remap plus
noise, mimicking the modality gap.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy import ndimage

from .raster import quantize, write_png
from .registration.homography import Homography
from .registration.warp import warp_image, warp_labels
from .segmap import ClassLabel, save_mask

# per-class visible base color and NIR reflectance
_VIS_COLORS = {
    ClassLabel.SHADOW: (14, 13, 16),
    ClassLabel.GROUND: (126, 92, 64),
    ClassLabel.HEALTHY: (58, 105, 48),
    ClassLabel.SYMPTOM: (168, 148, 62),
}
_NIR_REFLECTANCE = {
    ClassLabel.SHADOW: 0.06,
    ClassLabel.GROUND: 0.32,
    ClassLabel.HEALTHY: 0.80,
    ClassLabel.SYMPTOM: 0.55,
}


@dataclass
class SynthPair:
    vis: np.ndarray  # (h, w, 3) uint8
    ir: np.ndarray  # (h, w) uint8
    labels_vis: np.ndarray  # (h, w) uint8, visible-frame ground truth
    labels_ir: np.ndarray  # (h, w) uint8, infrared-frame ground truth
    homography: Homography  # maps infrared-frame coords to visible-frame


def _detail_field(rng: np.random.Generator, h: int, w: int) -> np.ndarray:
    fine = ndimage.gaussian_filter(rng.random((h, w)), 1.2)
    coarse = ndimage.gaussian_filter(rng.random((h, w)), 5.0)
    d = 0.6 * fine + 0.4 * coarse
    lo, hi = d.min(), d.max()
    return (d - lo) / (hi - lo) if hi > lo else np.zeros_like(d)


def make_scene(
    rng: np.random.Generator, width: int, height: int
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Render one scene; returns (labels, visible_rgb, nir)."""
    ys, xs = np.mgrid[0:height, 0:width].astype(np.float64)

    row_period = 64.0
    wobble = 5.0 * np.sin(2 * np.pi * xs / 180.0 + rng.uniform(0, 2 * np.pi))
    phase = rng.uniform(0, row_period)
    row_pos = np.mod(ys + wobble + phase, row_period)

    half = 11.0 + 2.5 * np.sin(2 * np.pi * xs / 95.0 + rng.uniform(0, 2 * np.pi))
    canopy = np.abs(row_pos - row_period / 2.0) < half
    shadow = (row_pos - row_period / 2.0 >= half) & (row_pos - row_period / 2.0 < half + 9.0)

    labels = np.full((height, width), int(ClassLabel.GROUND), dtype=np.uint8)
    labels[shadow] = int(ClassLabel.SHADOW)
    labels[canopy] = int(ClassLabel.HEALTHY)

    # symptom blobs inside canopy
    n_blobs = max(3, int(width * height / 16000))
    for _ in range(n_blobs):
        cx = rng.uniform(0, width)
        cy = rng.uniform(0, height)
        radius = rng.uniform(5.0, 13.0)
        blob = (xs - cx) ** 2 + (ys - cy) ** 2 < radius**2
        labels[blob & canopy] = int(ClassLabel.SYMPTOM)

    detail = _detail_field(rng, height, width)
    speckle = rng.random((height, width))
    illum = 1.0 + 0.08 * np.sin(2 * np.pi * xs / (width * 1.3) + rng.uniform(0, 2 * np.pi))

    mod = 0.55 + 0.9 * detail
    mod = mod * np.where(speckle > 0.985, 1.35, 1.0)  # occasional bright stones/leaves

    vis = np.zeros((height, width, 3), dtype=np.float64)
    nir_reflect = np.zeros((height, width), dtype=np.float64)
    for label, color in _VIS_COLORS.items():
        sel = labels == int(label)
        for c in range(3):
            vis[:, :, c][sel] = color[c]
        nir_reflect[sel] = _NIR_REFLECTANCE[label]
    # symptom areas show stronger reflectance variation in the infrared
    symptom_sel = labels == int(ClassLabel.SYMPTOM)
    nir_reflect[symptom_sel] *= 0.8 + 0.5 * speckle[symptom_sel]

    vis = vis * (mod * illum)[:, :, None]
    nir = 255.0 * (nir_reflect * mod * illum).clip(0, 1) ** 0.65
    nir += rng.normal(0.0, 2.0, size=nir.shape)
    return labels, quantize(vis), quantize(nir)


def sample_homography(
    rng: np.random.Generator,
    width: int,
    height: int,
    max_translation: float = 30.0,
    max_rotation_deg: float = 5.0,
    max_projective: float = 1e-5,
) -> Homography:
    """Ground-truth infrared->visible transform with bounded components."""
    angle = np.deg2rad(rng.uniform(-max_rotation_deg, max_rotation_deg))
    mag = rng.uniform(0.0, max_translation)
    direction = rng.uniform(0.0, 2 * np.pi)
    tx, ty = mag * np.cos(direction), mag * np.sin(direction)

    cx, cy = (width - 1) / 2.0, (height - 1) / 2.0
    c, s = np.cos(angle), np.sin(angle)
    rot = np.array(
        [
            [c, -s, cx - c * cx + s * cy + tx],
            [s, c, cy - s * cx - c * cy + ty],
            [0.0, 0.0, 1.0],
        ]
    )
    rot[2, 0] = rng.uniform(-max_projective, max_projective)
    rot[2, 1] = rng.uniform(-max_projective, max_projective)
    return Homography(rot)


def _margin_for(width: int, height: int, max_translation: float, max_rotation_deg: float) -> int:
    swing = 0.5 * float(np.hypot(width, height)) * np.sin(np.deg2rad(max_rotation_deg))
    return int(np.ceil(max_translation + swing + 8))


def make_pair(seed: int, width: int = 480, height: int = 360) -> SynthPair:
    """One visible/infrared pair with stored ground-truth homography."""
    rng = np.random.default_rng(np.random.SeedSequence([77, seed]))
    h_true = sample_homography(rng, width, height)
    margin = _margin_for(width, height, 30.0, 5.0)

    labels_scene, vis_scene, nir_scene = make_scene(rng, width + 2 * margin, height + 2 * margin)

    vis = vis_scene[margin : margin + height, margin : margin + width]
    labels_vis = labels_scene[margin : margin + height, margin : margin + width]

    # infrared frame samples the scene through the ground-truth transform:
    # ir(p) = scene_nir(T_margin @ H_true @ p)
    shift = Homography.translation(margin, margin)
    to_scene = shift.compose(h_true)
    ir, valid = warp_image(nir_scene, to_scene.inverse(), width, height)
    if not valid.all():
        raise AssertionError("scene margin too small for the sampled homography")
    labels_ir, _ = warp_labels(labels_scene, to_scene.inverse(), width, height)

    return SynthPair(
        vis=vis, ir=ir, labels_vis=labels_vis, labels_ir=labels_ir, homography=h_true
    )


def corner_rmse(estimated: Homography, truth: Homography, width: int, height: int) -> float:
    """Root-mean-square corner discrepancy between two transforms."""
    corners = np.array(
        [[0.0, 0.0], [width - 1.0, 0.0], [width - 1.0, height - 1.0], [0.0, height - 1.0]]
    )
    d = estimated.apply_points(corners) - truth.apply_points(corners)
    return float(np.sqrt(np.mean(np.sum(d * d, axis=1))))


def write_corpus(
    out_dir: str | Path, count: int, seed: int = 0, width: int = 480, height: int = 360
) -> dict:
    """Write ``count`` pairs plus ground truth and a corpus manifest."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    entries = []
    for i in range(count):
        pair = make_pair(seed * 100003 + i, width=width, height=height)
        names = {
            "vis": f"vis_{i:03d}.png",
            "ir": f"ir_{i:03d}.png",
            "labels_vis": f"labels_vis_{i:03d}.png",
            "labels_ir": f"labels_ir_{i:03d}.png",
            "homography": f"homography_{i:03d}.json",
        }
        write_png(out / names["vis"], pair.vis)
        write_png(out / names["ir"], pair.ir)
        save_mask(pair.labels_vis, out / names["labels_vis"])
        save_mask(pair.labels_ir, out / names["labels_ir"])
        (out / names["homography"]).write_text(
            json.dumps({"matrix": pair.homography.as_flat_list()}, indent=2)
        )
        entries.append(names)
    manifest = {
        "seed": seed,
        "count": count,
        "width": width,
        "height": height,
        "pairs": entries,
    }
    (out / "corpus.json").write_text(json.dumps(manifest, indent=2))
    return manifest
