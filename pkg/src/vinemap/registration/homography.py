"""Projective transforms, least-squares fitting and alignment error.

The homography convention follows the registration model: H maps points
from the infrared frame into the visible frame, with the lower-right
entry normalized to exactly 1:

    | 1+h00  h01   h02 |
    | h10    1+h11 h12 |
    | h20    h21   1   |
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import ContractError, NotInvertibleError, PointAtInfinityError

_DET_EPS = 1e-12
_W_EPS = 1e-12


@dataclass(frozen=True)
class Homography:
    """3x3 projective transform with unit lower-right element."""

    matrix: np.ndarray

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=np.float64)
        if m.shape != (3, 3):
            raise ContractError(f"homography matrix must be 3x3, got {m.shape}")
        if abs(m[2, 2]) <= _W_EPS:
            raise NotInvertibleError("lower-right element vanishes; cannot normalize")
        m = m / m[2, 2]
        if abs(np.linalg.det(m)) <= _DET_EPS:
            raise NotInvertibleError("homography matrix is singular")
        m.flags.writeable = False
        object.__setattr__(self, "matrix", m)

    @classmethod
    def identity(cls) -> "Homography":
        return cls(np.eye(3))

    @classmethod
    def translation(cls, tx: float, ty: float) -> "Homography":
        m = np.eye(3)
        m[0, 2] = tx
        m[1, 2] = ty
        return cls(m)

    def inverse(self) -> "Homography":
        return Homography(np.linalg.inv(self.matrix))

    def compose(self, other: "Homography") -> "Homography":
        """Return self ∘ other (apply ``other`` first), renormalized."""
        return Homography(self.matrix @ other.matrix)

    def apply(self, x, y):
        """Project points with perspective divide.

        Accepts scalars or equally shaped arrays; raises
        PointAtInfinityError when any denominator is within 1e-12 of zero.
        """
        xa = np.asarray(x, dtype=np.float64)
        ya = np.asarray(y, dtype=np.float64)
        m = self.matrix
        w = m[2, 0] * xa + m[2, 1] * ya + m[2, 2]
        if np.any(np.abs(w) <= _W_EPS):
            raise PointAtInfinityError("projected point lies at infinity")
        xp = (m[0, 0] * xa + m[0, 1] * ya + m[0, 2]) / w
        yp = (m[1, 0] * xa + m[1, 1] * ya + m[1, 2]) / w
        if xa.ndim == 0:
            return float(xp), float(yp)
        return xp, yp

    def apply_points(self, pts: np.ndarray) -> np.ndarray:
        """Project an (n, 2) point array."""
        pts = np.asarray(pts, dtype=np.float64)
        xp, yp = self.apply(pts[:, 0], pts[:, 1])
        return np.stack([xp, yp], axis=1)

    def corner_displacements(self, width: int, height: int) -> np.ndarray:
        """Distance moved by each image corner under this transform."""
        corners = np.array(
            [[0.0, 0.0], [width - 1.0, 0.0], [width - 1.0, height - 1.0], [0.0, height - 1.0]]
        )
        projected = self.apply_points(corners)
        return np.linalg.norm(projected - corners, axis=1)

    def as_flat_list(self) -> list[float]:
        return [float(v) for v in self.matrix.ravel()]


def viable(h: Homography, width: int, height: int, bound: float) -> bool:
    """Corner-displacement plausibility test.

    True iff every projected image corner moves by less than
    ``bound`` x image diagonal.
    """
    diagonal = float(np.hypot(width, height))
    try:
        moves = h.corner_displacements(width, height)
    except PointAtInfinityError:
        return False
    return bool(np.all(moves < bound * diagonal))


def alignment_rmse(vis_pts: np.ndarray, ir_pts: np.ndarray, h: Homography) -> tuple[float, float, float]:
    """Per-axis and combined RMSE between matched points.

    Infrared points are first projected by ``h`` into the visible frame;
    rmse = sqrt(rmse_x^2 + rmse_y^2).
    """
    vis_pts = np.asarray(vis_pts, dtype=np.float64)
    ir_pts = np.asarray(ir_pts, dtype=np.float64)
    if vis_pts.ndim != 2 or vis_pts.shape != ir_pts.shape or vis_pts.shape[1] != 2:
        raise ContractError("point arrays must both have shape (n, 2)")
    if len(vis_pts) == 0:
        raise ContractError("RMSE is undefined for an empty pair list")
    projected = h.apply_points(ir_pts)
    dx = vis_pts[:, 0] - projected[:, 0]
    dy = vis_pts[:, 1] - projected[:, 1]
    rmse_x = float(np.sqrt(np.mean(dx * dx)))
    rmse_y = float(np.sqrt(np.mean(dy * dy)))
    return rmse_x, rmse_y, float(np.hypot(rmse_x, rmse_y))


def _normalization(pts: np.ndarray) -> np.ndarray:
    """Hartley conditioning: centroid to origin, mean distance sqrt(2)."""
    centroid = pts.mean(axis=0)
    dist = np.linalg.norm(pts - centroid, axis=1).mean()
    scale = np.sqrt(2.0) / dist if dist > 0 else 1.0
    return np.array(
        [[scale, 0.0, -scale * centroid[0]], [0.0, scale, -scale * centroid[1]], [0.0, 0.0, 1.0]]
    )


def fit_homography(src_pts: np.ndarray, dst_pts: np.ndarray) -> Homography:
    """Least-squares homography from src to dst by the normalized DLT.

    Needs >= 4 correspondences; raises EstimationFailedError-compatible
    NotInvertibleError for degenerate configurations.
    """
    src = np.asarray(src_pts, dtype=np.float64)
    dst = np.asarray(dst_pts, dtype=np.float64)
    if src.shape != dst.shape or src.ndim != 2 or src.shape[1] != 2:
        raise ContractError("point arrays must both have shape (n, 2)")
    n = len(src)
    if n < 4:
        raise ContractError(f"homography needs at least 4 correspondences, got {n}")

    t_src = _normalization(src)
    t_dst = _normalization(dst)
    sh = np.hstack([src, np.ones((n, 1))]) @ t_src.T
    dh = np.hstack([dst, np.ones((n, 1))]) @ t_dst.T

    a = np.zeros((2 * n, 9))
    a[0::2, 0:2] = sh[:, 0:2]
    a[0::2, 2] = 1.0
    a[0::2, 6] = -dh[:, 0] * sh[:, 0]
    a[0::2, 7] = -dh[:, 0] * sh[:, 1]
    a[0::2, 8] = -dh[:, 0]
    a[1::2, 3:5] = sh[:, 0:2]
    a[1::2, 5] = 1.0
    a[1::2, 6] = -dh[:, 1] * sh[:, 0]
    a[1::2, 7] = -dh[:, 1] * sh[:, 1]
    a[1::2, 8] = -dh[:, 1]

    _, _, vt = np.linalg.svd(a)
    m = vt[-1].reshape(3, 3)
    m = np.linalg.inv(t_dst) @ m @ t_src
    return Homography(m)
