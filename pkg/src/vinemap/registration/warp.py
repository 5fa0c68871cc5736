"""Inverse-mapped bilinear warping of rasters into the visible frame."""

from __future__ import annotations

import numpy as np

from ..raster import quantize
from .homography import Homography

_W_EPS = 1e-12


def warp_coords(h: Homography, width: int, height: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Source sampling coordinates for every output pixel.

    Returns (src_x, src_y, finite_mask) arrays of shape (height, width);
    output pixels whose inverse projection degenerates are flagged out.
    """
    inv = h.inverse().matrix
    xs = np.arange(width, dtype=np.float64)
    ys = np.arange(height, dtype=np.float64)
    gx, gy = np.meshgrid(xs, ys)
    w = inv[2, 0] * gx + inv[2, 1] * gy + inv[2, 2]
    finite = np.abs(w) > _W_EPS
    w_safe = np.where(finite, w, 1.0)
    src_x = (inv[0, 0] * gx + inv[0, 1] * gy + inv[0, 2]) / w_safe
    src_y = (inv[1, 0] * gx + inv[1, 1] * gy + inv[1, 2]) / w_safe
    return src_x, src_y, finite


def _bilinear_gather(plane: np.ndarray, src_x: np.ndarray, src_y: np.ndarray) -> np.ndarray:
    h, w = plane.shape
    x0 = np.floor(src_x).astype(np.int64)
    y0 = np.floor(src_y).astype(np.int64)
    fx = src_x - x0
    fy = src_y - y0
    x0c = np.clip(x0, 0, w - 1)
    y0c = np.clip(y0, 0, h - 1)
    x1c = np.clip(x0 + 1, 0, w - 1)
    y1c = np.clip(y0 + 1, 0, h - 1)
    p = plane.astype(np.float64)
    top = p[y0c, x0c] * (1.0 - fx) + p[y0c, x1c] * fx
    bot = p[y1c, x0c] * (1.0 - fx) + p[y1c, x1c] * fx
    return top * (1.0 - fy) + bot * fy


def warp_image(
    img: np.ndarray, h: Homography, target_w: int, target_h: int
) -> tuple[np.ndarray, np.ndarray]:
    """Resample ``img`` through ``h`` onto a target_w x target_h canvas.

    Inverse mapping with bilinear interpolation; returns (warped, valid)
    where pixels without full source coverage are zero and flagged False.
    """
    src_x, src_y, finite = warp_coords(h, target_w, target_h)
    sh, sw = img.shape[:2]
    inside = (src_x >= 0.0) & (src_x <= sw - 1.0) & (src_y >= 0.0) & (src_y <= sh - 1.0)
    valid = finite & inside

    if img.ndim == 2:
        out = _bilinear_gather(img, src_x, src_y)
        out[~valid] = 0.0
        return quantize(out), valid
    planes = [_bilinear_gather(img[:, :, c], src_x, src_y) for c in range(img.shape[2])]
    out = np.stack(planes, axis=2)
    out[~valid] = 0.0
    return quantize(out), valid


def warp_labels(
    labels: np.ndarray, h: Homography, target_w: int, target_h: int, fill: int = 0
) -> tuple[np.ndarray, np.ndarray]:
    """Nearest-neighbor label transport through ``h`` (categorical data)."""
    src_x, src_y, finite = warp_coords(h, target_w, target_h)
    sh, sw = labels.shape[:2]
    xi = np.floor(src_x + 0.5).astype(np.int64)
    yi = np.floor(src_y + 0.5).astype(np.int64)
    valid = finite & (xi >= 0) & (xi < sw) & (yi >= 0) & (yi < sh)
    out = np.full((target_h, target_w), fill, dtype=labels.dtype)
    out[valid] = labels[yi[valid], xi[valid]]
    return out, valid
