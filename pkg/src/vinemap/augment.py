"""Deterministic augmentation grid over labeled frames.

Every combination of (position, rotation, scale, brightness) produces
one 480x360 labeled patch; image and label raster go through the same
geometric transform (bilinear for intensities, nearest neighbor for
labels).  Horizontal positions overlap by 50% so transition areas are
covered; the vertical stride is a full patch height, since vinerows run
along one axis in the frames.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError, ContractError
from .raster import quantize

DEFAULT_ROTATIONS = (0.0, 30.0, 60.0, 90.0, 120.0, 150.0, 180.0)
DEFAULT_SCALES = (0.5, 0.75, 1.0, 1.25, 1.5)
DEFAULT_BRIGHTNESS = (0.8, 0.9, 1.0, 1.1, 1.2)


@dataclass(frozen=True)
class AugmentationGrid:
    overlap_fraction: float = 0.5
    rotations: tuple[float, ...] = DEFAULT_ROTATIONS
    scales: tuple[float, ...] = DEFAULT_SCALES
    brightness: tuple[float, ...] = DEFAULT_BRIGHTNESS
    patch_w: int = 480
    patch_h: int = 360

    def __post_init__(self):
        if not 0.0 <= self.overlap_fraction < 1.0:
            raise ConfigurationError("overlap_fraction must be in [0, 1)")
        if any(s <= 0 for s in self.scales):
            raise ConfigurationError("scale factors must be positive")
        if any(b <= 0 for b in self.brightness):
            raise ConfigurationError("brightness gains must be positive")
        if any(not 0.0 <= r <= 180.0 for r in self.rotations):
            raise ConfigurationError("rotations must lie in [0, 180] degrees")
        if self.patch_w <= 0 or self.patch_h <= 0:
            raise ConfigurationError("patch dimensions must be positive")
        if not (self.rotations and self.scales and self.brightness):
            raise ConfigurationError("rotation/scale/brightness lists must be non-empty")

    @property
    def stride_x(self) -> int:
        return max(1, int(round(self.patch_w * (1.0 - self.overlap_fraction))))

    @property
    def stride_y(self) -> int:
        return self.patch_h

    def to_json(self) -> str:
        return json.dumps(
            {
                "overlap_fraction": self.overlap_fraction,
                "rotations": list(self.rotations),
                "scales": list(self.scales),
                "brightness": list(self.brightness),
                "patch_w": self.patch_w,
                "patch_h": self.patch_h,
            },
            indent=2,
        )

    @classmethod
    def from_json(cls, text: str) -> "AugmentationGrid":
        d = json.loads(text)
        return cls(
            overlap_fraction=d.get("overlap_fraction", 0.5),
            rotations=tuple(d.get("rotations", DEFAULT_ROTATIONS)),
            scales=tuple(d.get("scales", DEFAULT_SCALES)),
            brightness=tuple(d.get("brightness", DEFAULT_BRIGHTNESS)),
            patch_w=d.get("patch_w", 480),
            patch_h=d.get("patch_h", 360),
        )


@dataclass
class LabeledPatch:
    image: np.ndarray
    labels: np.ndarray
    frame_id: str
    x0: int
    y0: int
    rotation: float
    scale: float
    gain: float

    @property
    def provenance(self) -> dict:
        return {
            "frame_id": self.frame_id,
            "x0": self.x0,
            "y0": self.y0,
            "rotation": self.rotation,
            "scale": self.scale,
            "gain": self.gain,
        }


def positions(frame_w: int, frame_h: int, grid: AugmentationGrid) -> list[tuple[int, int]]:
    """Patch origins, row-major (y outer, x inner)."""
    if frame_w < grid.patch_w or frame_h < grid.patch_h:
        raise ConfigurationError(
            f"frame {frame_w}x{frame_h} smaller than patch {grid.patch_w}x{grid.patch_h}"
        )
    nx = (frame_w - grid.patch_w) // grid.stride_x + 1
    ny = (frame_h - grid.patch_h) // grid.stride_y + 1
    return [(x * grid.stride_x, y * grid.stride_y) for y in range(ny) for x in range(nx)]


def expected_count(frame_w: int, frame_h: int, grid: AugmentationGrid) -> int:
    """Closed-form patch count for one frame under the grid."""
    n_pos = len(positions(frame_w, frame_h, grid))
    return n_pos * len(grid.rotations) * len(grid.scales) * len(grid.brightness)


def _inverse_map(
    x0: int, y0: int, rotation_deg: float, scale: float, grid: AugmentationGrid
) -> np.ndarray:
    """2x3 affine sending output patch coords to source frame coords.

    Rotation and rescaling act about the patch center.
    """
    theta = np.deg2rad(rotation_deg)
    c, s = np.cos(theta), np.sin(theta)
    ocx = (grid.patch_w - 1) / 2.0
    ocy = (grid.patch_h - 1) / 2.0
    scx = x0 + ocx
    scy = y0 + ocy
    # source = center_src + R(-theta) @ (out - center_out) / scale
    a = np.array([[c, s], [-s, c]]) / scale
    t = np.array([scx, scy]) - a @ np.array([ocx, ocy])
    return np.hstack([a, t[:, None]])


def _patch_source_coords(m: np.ndarray, grid: AugmentationGrid) -> tuple[np.ndarray, np.ndarray]:
    xs = np.arange(grid.patch_w, dtype=np.float64)
    ys = np.arange(grid.patch_h, dtype=np.float64)
    gx, gy = np.meshgrid(xs, ys)
    sx = m[0, 0] * gx + m[0, 1] * gy + m[0, 2]
    sy = m[1, 0] * gx + m[1, 1] * gy + m[1, 2]
    return sx, sy


def _sample_bilinear(frame: np.ndarray, sx: np.ndarray, sy: np.ndarray) -> np.ndarray:
    h, w = frame.shape[:2]
    x0 = np.floor(sx).astype(np.int64)
    y0 = np.floor(sy).astype(np.int64)
    fx = sx - x0
    fy = sy - y0
    x0 = np.clip(x0, 0, w - 2)
    y0 = np.clip(y0, 0, h - 2)

    def gather(plane):
        p = plane.astype(np.float64)
        top = p[y0, x0] * (1 - fx) + p[y0, x0 + 1] * fx
        bot = p[y0 + 1, x0] * (1 - fx) + p[y0 + 1, x0 + 1] * fx
        return top * (1 - fy) + bot * fy

    if frame.ndim == 2:
        return gather(frame)
    return np.stack([gather(frame[:, :, c]) for c in range(frame.shape[2])], axis=2)


def generate(
    frame: np.ndarray,
    labels: np.ndarray,
    grid: AugmentationGrid | None = None,
    frame_id: str = "frame",
) -> tuple[list[LabeledPatch], list[dict]]:
    """Expand one labeled frame into the full augmentation grid.

    Tuples whose rotated/rescaled sampling window would leave the frame
    are skipped and reported, so len(patches) + len(skipped) equals
    expected_count.  Order is position-major, then rotation, scale,
    brightness.
    """
    grid = grid or AugmentationGrid()
    if frame.shape[:2] != labels.shape:
        raise ContractError("frame and label raster dimensions differ")
    fh, fw = frame.shape[:2]
    corners = np.array(
        [
            [0.0, 0.0, 1.0],
            [grid.patch_w - 1.0, 0.0, 1.0],
            [grid.patch_w - 1.0, grid.patch_h - 1.0, 1.0],
            [0.0, grid.patch_h - 1.0, 1.0],
        ]
    )

    patches: list[LabeledPatch] = []
    skipped: list[dict] = []
    for x0, y0 in positions(fw, fh, grid):
        for rot in grid.rotations:
            for scale in grid.scales:
                m = _inverse_map(x0, y0, rot, scale, grid)
                src_corners = corners @ m.T
                out_of_frame = (
                    src_corners[:, 0].min() < 0.0
                    or src_corners[:, 1].min() < 0.0
                    or src_corners[:, 0].max() > fw - 1.0
                    or src_corners[:, 1].max() > fh - 1.0
                )
                if out_of_frame:
                    for gain in grid.brightness:
                        skipped.append(
                            {"x0": x0, "y0": y0, "rotation": rot, "scale": scale, "gain": gain}
                        )
                    continue
                sx, sy = _patch_source_coords(m, grid)
                img = _sample_bilinear(frame, sx, sy)
                lx = np.clip(np.floor(sx + 0.5).astype(np.int64), 0, fw - 1)
                ly = np.clip(np.floor(sy + 0.5).astype(np.int64), 0, fh - 1)
                lab = labels[ly, lx]
                for gain in grid.brightness:
                    patches.append(
                        LabeledPatch(
                            image=quantize(img * gain),
                            labels=lab.copy(),
                            frame_id=frame_id,
                            x0=x0,
                            y0=y0,
                            rotation=rot,
                            scale=scale,
                            gain=gain,
                        )
                    )
    return patches, skipped


def split_dataset(patches: list, train_fraction: float = 0.85, seed: int = 0) -> tuple[list, list]:
    """Deterministic shuffled train/validation split.

    Train side takes floor(train_fraction * N); the remainder validates.
    """
    if len(patches) < 2:
        raise ContractError("need at least 2 patches to split")
    if not 0.0 < train_fraction < 1.0:
        raise ConfigurationError("train_fraction must be in (0, 1)")
    rng = np.random.default_rng(seed)
    order = rng.permutation(len(patches))
    n_train = int(np.floor(train_fraction * len(patches)))
    n_train = min(max(n_train, 1), len(patches) - 1)
    train = [patches[i] for i in order[:n_train]]
    val = [patches[i] for i in order[n_train:]]
    return train, val
