"""Keypoint detection on the nonlinear scale space.

Keypoints are maxima of the scale-normalized Hessian determinant across
space and adjacent scales, refined to sub-pixel accuracy and assigned a
dominant gradient orientation (sliding-window vector sum, SURF style).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage
from scipy.spatial import cKDTree

from .scale_space import ScaleLevel, ScaleSpace


@dataclass
class Keypoint:
    x: float  # absolute full-resolution coordinates
    y: float
    scale: float  # sigma, absolute units
    orientation: float  # radians
    response: float
    level: int  # index into the pyramid

    def grid_pos(self, level: ScaleLevel) -> tuple[float, float]:
        return self.x / level.step, self.y / level.step


def _dilated_scharr(img: np.ndarray, axis: int, delta: int) -> np.ndarray:
    """Scharr-style first derivative with sampling distance ``delta``.

    Derivative kernel (-1, 0, +1)/(2 delta) at spacing delta along
    ``axis``, cross-smoothed with (3, 10, 3)/16 weights at the same
    spacing.  Estimates a true first derivative in grid units.
    """
    size = 2 * delta + 1
    deriv = np.zeros(size)
    deriv[0] = -1.0 / (2.0 * delta)
    deriv[-1] = 1.0 / (2.0 * delta)
    smooth = np.zeros(size)
    smooth[0] = smooth[-1] = 3.0 / 16.0
    smooth[delta] = 10.0 / 16.0
    out = ndimage.correlate1d(img, deriv, axis=axis, mode="nearest")
    return ndimage.correlate1d(out, smooth, axis=1 - axis, mode="nearest")


def level_derivatives(level: ScaleLevel) -> tuple[np.ndarray, np.ndarray]:
    """First derivatives at the level's own scale, cached on the level."""
    if level.lx is None:
        delta = max(1, round(level.sigma_grid))
        level.lx = _dilated_scharr(level.image, axis=1, delta=delta)
        level.ly = _dilated_scharr(level.image, axis=0, delta=delta)
    return level.lx, level.ly


def hessian_response(level: ScaleLevel) -> np.ndarray:
    """sigma^4-normalized determinant of the Hessian."""
    delta = max(1, round(level.sigma_grid))
    lx, ly = level_derivatives(level)
    lxx = _dilated_scharr(lx, axis=1, delta=delta)
    lyy = _dilated_scharr(ly, axis=0, delta=delta)
    lxy = _dilated_scharr(lx, axis=0, delta=delta)
    return level.sigma_grid**4 * (lxx * lyy - lxy * lxy)


def _refined_candidates(resp: np.ndarray, mask: np.ndarray) -> tuple[np.ndarray, ...]:
    """Quadratic sub-pixel refinement of all masked maxima at once.

    Points whose fitted offset exceeds one pixel are discarded.
    Returns (x, y, response) arrays in level grid coordinates.
    """
    ys, xs = np.nonzero(mask)
    if len(ys) == 0:
        return np.empty(0), np.empty(0), np.empty(0)
    gx = 0.5 * (resp[ys, xs + 1] - resp[ys, xs - 1])
    gy = 0.5 * (resp[ys + 1, xs] - resp[ys - 1, xs])
    hxx = resp[ys, xs + 1] + resp[ys, xs - 1] - 2.0 * resp[ys, xs]
    hyy = resp[ys + 1, xs] + resp[ys - 1, xs] - 2.0 * resp[ys, xs]
    hxy = 0.25 * (
        resp[ys + 1, xs + 1] + resp[ys - 1, xs - 1] - resp[ys + 1, xs - 1] - resp[ys - 1, xs + 1]
    )
    det = hxx * hyy - hxy * hxy
    ok = np.abs(det) > 1e-30
    det_safe = np.where(ok, det, 1.0)
    dx = -(hyy * gx - hxy * gy) / det_safe
    dy = -(hxx * gy - hxy * gx) / det_safe
    ok &= (np.abs(dx) <= 1.0) & (np.abs(dy) <= 1.0)
    return (xs + dx)[ok], (ys + dy)[ok], resp[ys, xs][ok]


# Precomputed disc of sample offsets for orientation, radius 6 (sigma units).
_ORI_OFFSETS = np.array(
    [(i, j) for i in range(-6, 7) for j in range(-6, 7) if i * i + j * j <= 36]
)
_ORI_WEIGHTS = np.exp(-np.sum(_ORI_OFFSETS**2, axis=1) / (2.0 * 2.5**2))
_ORI_WINDOW = np.pi / 3.0
_ORI_STEPS = np.arange(0.0, 2.0 * np.pi, 0.15)


def _dominant_orientations(level: ScaleLevel, xg: np.ndarray, yg: np.ndarray) -> np.ndarray:
    """Dominant gradient direction for each (xg, yg) on one level."""
    lx, ly = level_derivatives(level)
    h, w = level.image.shape
    s = level.sigma_grid
    xs = np.clip(np.round(xg[:, None] + _ORI_OFFSETS[None, :, 1] * s).astype(int), 0, w - 1)
    ys = np.clip(np.round(yg[:, None] + _ORI_OFFSETS[None, :, 0] * s).astype(int), 0, h - 1)
    weights = _ORI_WEIGHTS[None, :].astype(lx.dtype)
    rx = lx[ys, xs] * weights
    ry = ly[ys, xs] * weights
    # angles normalized to [0, 2pi) once, so window tests need no modulo
    angles = np.arctan2(ry, rx)
    angles = np.where(angles < 0.0, angles + 2.0 * np.pi, angles)
    best_mag = np.full(len(xg), -1.0)
    best_angle = np.zeros(len(xg))
    two_pi = 2.0 * np.pi
    for a0 in _ORI_STEPS:
        hi = a0 + _ORI_WINDOW
        sel = (angles >= a0) & (angles < hi)
        if hi > two_pi:
            sel |= angles < hi - two_pi
        sx = np.where(sel, rx, 0.0).sum(axis=1)
        sy = np.where(sel, ry, 0.0).sum(axis=1)
        mag = sx * sx + sy * sy
        upd = mag > best_mag
        if upd.any():
            best_angle[upd] = np.arctan2(sy[upd], sx[upd])
            best_mag[upd] = mag[upd]
    return best_angle


def detect(
    pyramid: ScaleSpace,
    threshold: float = 0.001,
    max_keypoints: int | None = None,
) -> list[Keypoint]:
    """Extract scale-space keypoints; empty result is valid output."""
    level_pts: list[np.ndarray] = []
    level_resp: list[np.ndarray] = []
    for level in pyramid.levels:
        resp = hessian_response(level)
        delta = max(1, round(level.sigma_grid))
        margin = 2 * delta + 1
        local_max = resp == ndimage.maximum_filter(resp, size=3, mode="constant", cval=-np.inf)
        mask = (resp > threshold) & local_max
        mask[:margin] = mask[-margin:] = False
        mask[:, :margin] = mask[:, -margin:] = False
        xg, yg, r = _refined_candidates(resp, mask)
        level_pts.append(np.stack([xg * level.step, yg * level.step], axis=1))
        level_resp.append(r)

    # Suppress duplicates across adjacent scales: a candidate survives if
    # no stronger candidate sits within half its sigma one level up/down.
    survivors: list[np.ndarray] = []
    trees = [cKDTree(p) if len(p) else None for p in level_pts]
    for idx, level in enumerate(pyramid.levels):
        pts = level_pts[idx]
        if len(pts) == 0:
            survivors.append(np.zeros(0, dtype=bool))
            continue
        alive = np.ones(len(pts), dtype=bool)
        radius = 0.5 * level.sigma
        for nb in (idx - 1, idx + 1):
            if nb < 0 or nb >= len(pyramid.levels) or trees[nb] is None:
                continue
            neighbor_lists = trees[nb].query_ball_point(pts, r=radius)
            resp_nb = level_resp[nb]
            for i, near in enumerate(neighbor_lists):
                if alive[i] and near and resp_nb[near].max() > level_resp[idx][i]:
                    alive[i] = False
        survivors.append(alive)

    rows = []
    for idx in range(len(pyramid.levels)):
        alive = survivors[idx]
        if not alive.any():
            continue
        pts = level_pts[idx][alive]
        rs = level_resp[idx][alive]
        rows.append(
            np.column_stack([rs, pts[:, 0], pts[:, 1], np.full(len(rs), idx, dtype=float)])
        )
    if not rows:
        return []
    table = np.vstack(rows)
    order = np.lexsort((table[:, 3], table[:, 1], table[:, 2], -table[:, 0]))
    table = table[order]
    if max_keypoints is not None:
        table = table[:max_keypoints]

    keypoints: list[Keypoint] = []
    by_level: dict[int, list[int]] = {}
    for row_idx, row in enumerate(table):
        by_level.setdefault(int(row[3]), []).append(row_idx)
    orientations = np.zeros(len(table))
    for lvl_idx, row_ids in by_level.items():
        level = pyramid.levels[lvl_idx]
        rows_arr = table[row_ids]
        ang = _dominant_orientations(
            level, rows_arr[:, 1] / level.step, rows_arr[:, 2] / level.step
        )
        orientations[row_ids] = ang
    for row, ang in zip(table, orientations):
        level = pyramid.levels[int(row[3])]
        keypoints.append(
            Keypoint(
                x=float(row[1]),
                y=float(row[2]),
                scale=level.sigma,
                orientation=float(ang),
                response=float(row[0]),
                level=int(row[3]),
            )
        )
    return keypoints
