"""Full visible/infrared registration: dynamic threshold regulation,
viability-tested RANSAC, and iterative RMSE-minimizing refinement."""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

from ..errors import (
    ConfigurationError,
    EstimationFailedError,
    InsufficientTextureError,
    NotInvertibleError,
    RegistrationFailedError,
)
from ..features import build_scale_space, describe, detect, match
from ..features.descriptor import PATTERN_SCALE
from ..raster import Channel, extract_channel, normalize
from .homography import Homography, alignment_rmse, viable
from .ransac import estimate_ransac
from .warp import warp_image


@dataclass(frozen=True)
class FeatureParams:
    """Detector/descriptor knobs shared by both modalities."""

    octaves: int = 4
    sublevels: int = 4
    detector_threshold: float = 0.001
    max_keypoints: int = 1200
    pattern_scale: float = PATTERN_SCALE


@dataclass(frozen=True)
class RegistrationConfig:
    match_threshold_schedule: tuple[int, ...] = (40, 55, 70, 90)
    ransac_threshold_schedule: tuple[float, ...] = (2.0, 4.0, 6.0, 10.0)
    corner_displacement_bound: float = 0.25
    max_iterations: int = 10
    min_matches: int = 10
    features: FeatureParams = field(default_factory=FeatureParams)

    def __post_init__(self):
        for name, sched in (
            ("match_threshold_schedule", self.match_threshold_schedule),
            ("ransac_threshold_schedule", self.ransac_threshold_schedule),
        ):
            if len(sched) == 0:
                raise ConfigurationError(f"{name} must not be empty")
            if any(b <= a for a, b in zip(sched, sched[1:])):
                raise ConfigurationError(f"{name} must be strictly ascending")
        if self.max_iterations < 1:
            raise ConfigurationError("max_iterations must be >= 1")
        if self.min_matches < 4:
            raise ConfigurationError("min_matches must be >= 4")


@dataclass
class RegistrationResult:
    homography: Homography
    rmse: float
    rmse_x: float
    rmse_y: float
    rmse_standard: float  # pre-registration RMSE, before refinement
    iterations: int
    inliers_vis: np.ndarray  # (n, 2) visible-frame coordinates
    inliers_ir: np.ndarray  # (n, 2) original infrared-frame coordinates
    runtime: float
    mode: str  # "standard" | "optimized"
    match_threshold: int
    ransac_tolerance: float

    @property
    def inlier_count(self) -> int:
        return len(self.inliers_vis)

    @property
    def quality(self) -> str:
        if self.rmse <= 5.0:
            return "ok"
        if self.rmse <= 10.0:
            return "degraded"
        return "unreliable"

    def to_report_dict(self) -> dict:
        return {
            "rmse": self.rmse,
            "rmse_x": self.rmse_x,
            "rmse_y": self.rmse_y,
            "rmse_standard": self.rmse_standard,
            "iterations": self.iterations,
            "inlier_count": self.inlier_count,
            "runtime_seconds": self.runtime,
            "homography": self.homography.as_flat_list(),
            "mode": self.mode,
            "quality": self.quality,
        }


def _features_for(gray: np.ndarray, params: FeatureParams, valid: np.ndarray | None = None):
    pyramid = build_scale_space(gray, octaves=params.octaves, sublevels=params.sublevels)
    kps = detect(pyramid, threshold=params.detector_threshold, max_keypoints=params.max_keypoints)
    if valid is not None and not valid.all():
        # keep keypoints whose descriptor pattern avoids no-coverage zones
        dist = ndimage.distance_transform_edt(valid)
        h, w = valid.shape
        kept = []
        for kp in kps:
            margin = params.pattern_scale * kp.scale * 1.4142 + 2.0
            xi = min(max(int(round(kp.x)), 0), w - 1)
            yi = min(max(int(round(kp.y)), 0), h - 1)
            if dist[yi, xi] >= margin:
                kept.append(kp)
        kps = kept
    return describe(pyramid, kps, pattern_scale=params.pattern_scale)


def _match_points(kps_a, kps_b, matches) -> tuple[np.ndarray, np.ndarray]:
    a = np.array([(kps_a[m.query_index].x, kps_a[m.query_index].y) for m in matches])
    b = np.array([(kps_b[m.train_index].x, kps_b[m.train_index].y) for m in matches])
    return a, b


# Minimum inlier bounding-box extent, as a fraction of each image
# dimension.  A homography fitted to a small cluster of points satisfies
# the corner test yet extrapolates badly; such fits are only kept as a
# fallback when the whole schedule yields nothing better.
_SPREAD_FRACTION = 0.3


def _spread_ok(pts: np.ndarray, width: int, height: int) -> bool:
    if len(pts) == 0:
        return False
    ext_x = float(pts[:, 0].max() - pts[:, 0].min())
    ext_y = float(pts[:, 1].max() - pts[:, 1].min())
    return ext_x >= _SPREAD_FRACTION * width and ext_y >= _SPREAD_FRACTION * height


def register_pair(
    vis: np.ndarray,
    ir: np.ndarray,
    cfg: RegistrationConfig | None = None,
    rng_seed: int = 0,
) -> RegistrationResult:
    """Estimate the infrared->visible homography for one image pair.

    Pipeline: extract and normalize G / NIR; detect, describe and match
    features; sweep the match-threshold x RANSAC-tolerance schedules
    until a fit passes the corner-displacement viability test (dynamic
    regulation); then iterate re-registration on the warped pair,
    accepting an iteration only while the inlier RMSE strictly drops.
    If refinement never improves, the pre-registration result stands.
    """
    cfg = cfg or RegistrationConfig()
    t0 = time.perf_counter()
    rng = np.random.default_rng(rng_seed)

    g = normalize(extract_channel(vis, Channel.GREEN))
    nir = normalize(extract_channel(ir, Channel.NIR))
    ir_h, ir_w = nir.shape

    kps_g, desc_g = _features_for(g, cfg.features)
    kps_n, desc_n = _features_for(nir, cfg.features)
    if len(desc_g) == 0 or len(desc_n) == 0:
        raise InsufficientTextureError("no describable keypoints in at least one modality")

    accepted = None
    fallback = None
    most_matches = 0
    for mt in cfg.match_threshold_schedule:
        matches = match(desc_g, desc_n, mt)
        most_matches = max(most_matches, len(matches))
        if len(matches) < cfg.min_matches:
            continue
        vis_pts, ir_pts = _match_points(kps_g, kps_n, matches)
        for rt in cfg.ransac_threshold_schedule:
            try:
                h, mask = estimate_ransac(ir_pts, vis_pts, rt, cfg.min_matches, rng)
            except EstimationFailedError:
                continue
            if not viable(h, ir_w, ir_h, cfg.corner_displacement_bound):
                continue
            if _spread_ok(vis_pts[mask], ir_w, ir_h):
                accepted = (mt, rt, h, mask, vis_pts, ir_pts)
                break
            if fallback is None:
                fallback = (mt, rt, h, mask, vis_pts, ir_pts)
        if accepted:
            break
    if accepted is None:
        accepted = fallback

    if accepted is None:
        if most_matches < cfg.min_matches:
            raise InsufficientTextureError(
                f"at most {most_matches} matches at every threshold "
                f"(min_matches={cfg.min_matches})"
            )
        raise RegistrationFailedError("no viable homography over the full threshold schedule")

    mt, rt, h_cur, mask, vis_pts, ir_pts = accepted
    rx, ry, r_cur = alignment_rmse(vis_pts[mask], ir_pts[mask], h_cur)
    result = RegistrationResult(
        homography=h_cur,
        rmse=r_cur,
        rmse_x=rx,
        rmse_y=ry,
        rmse_standard=r_cur,
        iterations=1,
        inliers_vis=vis_pts[mask],
        inliers_ir=ir_pts[mask],
        runtime=0.0,
        mode="standard",
        match_threshold=mt,
        ransac_tolerance=rt,
    )

    # Iterative refinement: re-detect on the warped pair, compose, keep
    # the minimum-RMSE composition, stop on the first non-decrease.
    while result.iterations < cfg.max_iterations:
        warped, valid = warp_image(nir, result.homography, ir_w, ir_h)
        kps_w, desc_w = _features_for(warped, cfg.features, valid=valid)
        if len(desc_w) == 0:
            break
        # dynamic threshold inside the iterative phase: relax along the
        # schedule until enough correspondences appear on the warped pair
        matches = []
        for mt_iter in [t for t in cfg.match_threshold_schedule if t >= mt] or [mt]:
            matches = match(desc_g, desc_w, mt_iter)
            if len(matches) >= cfg.min_matches:
                break
        if len(matches) < cfg.min_matches:
            break
        vis2, warped_pts = _match_points(kps_g, kps_w, matches)
        try:
            dh, dmask = estimate_ransac(warped_pts, vis2, rt, cfg.min_matches, rng)
        except EstimationFailedError:
            break
        try:
            h_new = dh.compose(result.homography)
        except NotInvertibleError:
            break
        if not viable(h_new, ir_w, ir_h, cfg.corner_displacement_bound):
            break
        rx, ry, r_new = alignment_rmse(vis2[dmask], warped_pts[dmask], dh)
        if not r_new < result.rmse:
            break
        back = result.homography.inverse()
        result.homography = h_new
        result.rmse, result.rmse_x, result.rmse_y = r_new, rx, ry
        result.iterations += 1
        result.inliers_vis = vis2[dmask]
        result.inliers_ir = back.apply_points(warped_pts[dmask])
        result.mode = "optimized"

    result.runtime = time.perf_counter() - t0
    return result
