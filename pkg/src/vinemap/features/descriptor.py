"""Binary descriptors over the nonlinear scale space (M-LDB style).

Each keypoint gets 486 bits: the patch around it is split into 2x2, 3x3
and 4x4 grids of cells, steered by the keypoint orientation and scaled
by its sigma; for every pair of cells within a grid, three signed
comparisons (mean intensity, mean rotated x-gradient, mean rotated
y-gradient) contribute one bit each.  486 bits pack into 61 bytes with
2 trailing pad bits.
"""

from __future__ import annotations

from itertools import combinations

import numpy as np

from .detector import Keypoint, level_derivatives
from .scale_space import ScaleSpace

GRID_DIVISIONS = (2, 3, 4)
SAMPLES_PER_CELL_AXIS = 3
DESCRIPTOR_BITS = 3 * sum(g * g * (g * g - 1) // 2 for g in GRID_DIVISIONS)  # 486
DESCRIPTOR_BYTES = (DESCRIPTOR_BITS + 7) // 8  # 61
PATTERN_SCALE = 10.0  # patch half-width in units of sigma


def _grid_lattice(g: int, q: int = SAMPLES_PER_CELL_AXIS) -> np.ndarray:
    """Unit-square sample offsets ordered cell-major (row-major cells)."""
    pts = []
    for cy in range(g):
        for cx in range(g):
            for sy in range(q):
                for sx in range(q):
                    u = (cx + (sx + 0.5) / q) * (2.0 / g) - 1.0
                    v = (cy + (sy + 0.5) / q) * (2.0 / g) - 1.0
                    pts.append((u, v))
    return np.array(pts)


_LATTICES = {g: _grid_lattice(g) for g in GRID_DIVISIONS}
_PAIRS = {g: np.array(list(combinations(range(g * g), 2))) for g in GRID_DIVISIONS}


def _bilinear(plane: np.ndarray, xs: np.ndarray, ys: np.ndarray) -> np.ndarray:
    h, w = plane.shape
    x0 = np.floor(xs).astype(np.int64)
    y0 = np.floor(ys).astype(np.int64)
    fx = xs - x0
    fy = ys - y0
    x0 = np.clip(x0, 0, w - 2)
    y0 = np.clip(y0, 0, h - 2)
    top = plane[y0, x0] * (1 - fx) + plane[y0, x0 + 1] * fx
    bot = plane[y0 + 1, x0] * (1 - fx) + plane[y0 + 1, x0 + 1] * fx
    return top * (1 - fy) + bot * fy


def describe(
    pyramid: ScaleSpace,
    keypoints: list[Keypoint],
    pattern_scale: float = PATTERN_SCALE,
) -> tuple[list[Keypoint], np.ndarray]:
    """Binary descriptors for ``keypoints`` detected on ``pyramid``.

    Keypoints whose sampling pattern would leave the image are dropped,
    so the returned keypoint list pairs up with the descriptor rows.
    Returns (kept_keypoints, packed_bits) with packed_bits of shape
    (n, 61) uint8.
    """
    kept: list[Keypoint] = []
    rows: list[np.ndarray] = []

    by_level: dict[int, list[Keypoint]] = {}
    for kp in keypoints:
        by_level.setdefault(kp.level, []).append(kp)

    for level_idx in sorted(by_level):
        level = pyramid.levels[level_idx]
        kps = by_level[level_idx]
        h, w = level.image.shape
        radius = pattern_scale * level.sigma_grid
        margin = radius * np.sqrt(2.0) + 2.0

        pos = np.array([kp.grid_pos(level) for kp in kps])
        inside = (
            (pos[:, 0] >= margin)
            & (pos[:, 0] <= w - 1 - margin)
            & (pos[:, 1] >= margin)
            & (pos[:, 1] <= h - 1 - margin)
        )
        if not inside.any():
            continue
        kps = [kp for kp, ok in zip(kps, inside) if ok]
        pos = pos[inside]
        angles = np.array([kp.orientation for kp in kps])
        cos_t = np.cos(angles)
        sin_t = np.sin(angles)
        # rotation matrices, one per keypoint: column vectors of the frame
        rot = np.stack(
            [np.stack([cos_t, -sin_t], axis=1), np.stack([sin_t, cos_t], axis=1)], axis=1
        )  # (n, 2, 2) mapping patch (u, v) -> image (x, y)

        lx, ly = level_derivatives(level)
        img = level.image

        grid_bits = []
        for g in GRID_DIVISIONS:
            lattice = _LATTICES[g] * radius  # (s, 2)
            coords = np.einsum("nij,sj->nsi", rot, lattice) + pos[:, None, :]
            xs = coords[..., 0].ravel()
            ys = coords[..., 1].ravel()
            n = len(kps)
            vi = _bilinear(img, xs, ys).reshape(n, -1)
            vx = _bilinear(lx, xs, ys).reshape(n, -1)
            vy = _bilinear(ly, xs, ys).reshape(n, -1)
            # steer the gradients into the keypoint frame
            rdx = vx * cos_t[:, None] + vy * sin_t[:, None]
            rdy = -vx * sin_t[:, None] + vy * cos_t[:, None]
            q2 = SAMPLES_PER_CELL_AXIS * SAMPLES_PER_CELL_AXIS
            mi = vi.reshape(n, g * g, q2).mean(axis=2)
            mx = rdx.reshape(n, g * g, q2).mean(axis=2)
            my = rdy.reshape(n, g * g, q2).mean(axis=2)
            a = _PAIRS[g][:, 0]
            b = _PAIRS[g][:, 1]
            bits = np.stack(
                [mi[:, a] > mi[:, b], mx[:, a] > mx[:, b], my[:, a] > my[:, b]], axis=2
            )  # (n, pairs, 3)
            grid_bits.append(bits.reshape(n, -1))

        all_bits = np.concatenate(grid_bits, axis=1)
        assert all_bits.shape[1] == DESCRIPTOR_BITS
        packed = np.packbits(all_bits, axis=1)
        kept.extend(kps)
        rows.append(packed)

    if not rows:
        return [], np.empty((0, DESCRIPTOR_BYTES), dtype=np.uint8)
    return kept, np.vstack(rows)
