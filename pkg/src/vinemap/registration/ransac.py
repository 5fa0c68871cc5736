"""Robust homography estimation by random sample consensus."""

from __future__ import annotations

import numpy as np

from ..errors import ContractError, EstimationFailedError, NotInvertibleError
from .homography import Homography, fit_homography

# Adaptive stopping: keep sampling until this confidence of having drawn
# one all-inlier minimal set, capped to bound pathological inputs.
CONFIDENCE = 0.999
MAX_SAMPLES = 5000


def _reprojection_errors(h: Homography, src: np.ndarray, dst: np.ndarray) -> np.ndarray:
    m = h.matrix
    w = m[2, 0] * src[:, 0] + m[2, 1] * src[:, 1] + m[2, 2]
    bad = np.abs(w) <= 1e-12
    w = np.where(bad, 1.0, w)
    xp = (m[0, 0] * src[:, 0] + m[0, 1] * src[:, 1] + m[0, 2]) / w
    yp = (m[1, 0] * src[:, 0] + m[1, 1] * src[:, 1] + m[1, 2]) / w
    err = np.hypot(dst[:, 0] - xp, dst[:, 1] - yp)
    err[bad] = np.inf
    return err


def _degenerate_sample(pts: np.ndarray) -> bool:
    # Any three collinear points make the 4-point DLT rank deficient.
    for skip in range(4):
        tri = np.delete(pts, skip, axis=0)
        area2 = abs(
            (tri[1, 0] - tri[0, 0]) * (tri[2, 1] - tri[0, 1])
            - (tri[2, 0] - tri[0, 0]) * (tri[1, 1] - tri[0, 1])
        )
        if area2 < 1e-9:
            return True
    return False


def estimate_ransac(
    src_pts: np.ndarray,
    dst_pts: np.ndarray,
    tol: float,
    min_matches: int = 10,
    rng_seed: int | np.random.Generator = 0,
) -> tuple[Homography, np.ndarray]:
    """Fit src->dst homography on the maximal consensus set.

    Hypotheses come from 4-point minimal samples; the winner is refit by
    least squares on all its inliers (reprojection error <= tol).
    Deterministic for a fixed seed.  Raises EstimationFailedError when
    the best consensus stays below ``min_matches``.
    """
    src = np.asarray(src_pts, dtype=np.float64)
    dst = np.asarray(dst_pts, dtype=np.float64)
    if src.shape != dst.shape or src.ndim != 2 or src.shape[1] != 2:
        raise ContractError("point arrays must both have shape (n, 2)")
    n = len(src)
    if n < max(4, min_matches):
        raise EstimationFailedError(f"{n} correspondences, need at least {max(4, min_matches)}")

    rng = rng_seed if isinstance(rng_seed, np.random.Generator) else np.random.default_rng(rng_seed)

    best_mask = None
    best_count = 0
    best_sse = np.inf
    max_iter = MAX_SAMPLES
    it = 0
    while it < max_iter:
        it += 1
        idx = rng.choice(n, size=4, replace=False)
        if _degenerate_sample(src[idx]) or _degenerate_sample(dst[idx]):
            continue
        try:
            h = fit_homography(src[idx], dst[idx])
        except NotInvertibleError:
            continue
        err = _reprojection_errors(h, src, dst)
        mask = err <= tol
        count = int(mask.sum())
        if count < 4:
            continue
        sse = float(np.sum(err[mask] ** 2))
        if count > best_count or (count == best_count and sse < best_sse):
            best_count = count
            best_mask = mask
            best_sse = sse
            # Standard adaptive bound on the number of samples.
            ratio = count / n
            if ratio >= 1.0:
                break
            denom = np.log(1.0 - ratio**4) if ratio > 0 else -1e-12
            needed = int(np.ceil(np.log(1.0 - CONFIDENCE) / denom)) if denom < 0 else MAX_SAMPLES
            max_iter = min(MAX_SAMPLES, max(it, needed))

    if best_mask is None or best_count < min_matches:
        raise EstimationFailedError(
            f"consensus of {best_count} below min_matches={min_matches} at tol={tol}"
        )

    try:
        refined = fit_homography(src[best_mask], dst[best_mask])
    except NotInvertibleError as exc:
        raise EstimationFailedError(f"degenerate consensus set of {best_count} points") from exc
    err = _reprojection_errors(refined, src, dst)
    refined_mask = err <= tol
    if int(refined_mask.sum()) < min_matches:
        # Refit drifted; keep the consensus membership that elected it.
        refined_mask = best_mask
    return refined, refined_mask
