"""Image containers and raster primitives.

Rasters are plain numpy ``uint8`` arrays: ``(h, w)`` for single-channel
images and ``(h, w, 3)`` / ``(h, w, 4)`` for multi-channel ones.  Pixel
values live in [0, 255]; computation may go through floats but anything
stored or written to disk is quantized back with round-half-up.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from enum import Enum
from pathlib import Path

import numpy as np
from PIL import Image

from .errors import ChannelNotPresentError, ConfigurationError, IntegrityError


class Channel(Enum):
    RED = "red"
    GREEN = "green"
    BLUE = "blue"
    NIR = "nir"


# Default channel layout by channel count.  Single-channel rasters are
# assumed to carry the near-infrared band (the only 1-channel source in
# the pipeline); pass an explicit layout to override.
DEFAULT_LAYOUTS = {
    1: (Channel.NIR,),
    3: (Channel.RED, Channel.GREEN, Channel.BLUE),
    4: (Channel.RED, Channel.GREEN, Channel.BLUE, Channel.NIR),
}


def channel_count(img: np.ndarray) -> int:
    if img.ndim == 2:
        return 1
    if img.ndim == 3:
        return img.shape[2]
    raise ConfigurationError(f"raster must be 2-D or 3-D, got shape {img.shape}")


def quantize(values: np.ndarray) -> np.ndarray:
    """Round-half-up to the nearest integer and clip to [0, 255]."""
    return np.clip(np.floor(np.asarray(values, dtype=np.float64) + 0.5), 0, 255).astype(np.uint8)


def extract_channel(img: np.ndarray, ch: Channel, layout: tuple[Channel, ...] | None = None) -> np.ndarray:
    """Return a single-channel copy of one spectral plane.

    The plane is selected by ``layout`` (defaults per channel count, see
    DEFAULT_LAYOUTS); every selected pixel value is preserved exactly.
    """
    n = channel_count(img)
    if layout is None:
        layout = DEFAULT_LAYOUTS.get(n)
        if layout is None:
            raise ConfigurationError(f"no default layout for {n}-channel raster")
    if len(layout) != n:
        raise ConfigurationError(f"layout has {len(layout)} entries for a {n}-channel raster")
    if ch not in layout:
        raise ChannelNotPresentError(f"channel {ch.value} not present in layout {[c.value for c in layout]}")
    if img.ndim == 2:
        return img.copy()
    return img[:, :, layout.index(ch)].copy()


def normalize(img: np.ndarray) -> np.ndarray:
    """Stretch a single-channel raster to the full [0, 255] range.

    output = 255 * (I - min(I)) / (max(I) - min(I)), quantized by
    round-half-up.  A constant image maps to all zeros (division guard).
    """
    if img.ndim != 2:
        raise ConfigurationError("normalize expects a single-channel raster")
    if img.size == 0:
        raise ConfigurationError("normalize expects a non-empty raster")
    data = img.astype(np.float64)
    lo = data.min()
    hi = data.max()
    if hi == lo:
        return np.zeros(img.shape, dtype=np.uint8)
    return quantize(255.0 * (data - lo) / (hi - lo))


@dataclass(frozen=True)
class TileGrid:
    """Non-overlapping tiling of a raster, edge tiles zero-padded.

    Tiles are laid out row-major; ``pad_right``/``pad_bottom`` record the
    padding added to the last column/row so stitching is exact.
    """

    tile_w: int = 480
    tile_h: int = 360
    cols: int = 0
    rows: int = 0
    pad_right: int = 0
    pad_bottom: int = 0

    def __post_init__(self):
        if self.tile_w <= 0 or self.tile_h <= 0:
            raise ConfigurationError("tile dimensions must be positive")

    @classmethod
    def for_image(cls, width: int, height: int, tile_w: int = 480, tile_h: int = 360) -> "TileGrid":
        if tile_w <= 0 or tile_h <= 0:
            raise ConfigurationError("tile dimensions must be positive")
        if width <= 0 or height <= 0:
            raise ConfigurationError("image dimensions must be positive")
        cols = -(-width // tile_w)
        rows = -(-height // tile_h)
        return cls(
            tile_w=tile_w,
            tile_h=tile_h,
            cols=cols,
            rows=rows,
            pad_right=cols * tile_w - width,
            pad_bottom=rows * tile_h - height,
        )

    @property
    def width(self) -> int:
        return self.cols * self.tile_w - self.pad_right

    @property
    def height(self) -> int:
        return self.rows * self.tile_h - self.pad_bottom

    def origins(self) -> list[tuple[int, int]]:
        """Row-major (x0, y0) origin of every tile."""
        return [(c * self.tile_w, r * self.tile_h) for r in range(self.rows) for c in range(self.cols)]

    def to_json(self) -> str:
        return json.dumps(
            {
                "tile_w": self.tile_w,
                "tile_h": self.tile_h,
                "cols": self.cols,
                "rows": self.rows,
                "pad_right": self.pad_right,
                "pad_bottom": self.pad_bottom,
            },
            indent=2,
        )

    @classmethod
    def from_json(cls, text: str) -> "TileGrid":
        d = json.loads(text)
        return cls(
            tile_w=d["tile_w"],
            tile_h=d["tile_h"],
            cols=d["cols"],
            rows=d["rows"],
            pad_right=d["pad_right"],
            pad_bottom=d["pad_bottom"],
        )


def tile(img: np.ndarray, grid: TileGrid) -> list[np.ndarray]:
    """Cut a raster into the grid's row-major tile sequence."""
    h, w = img.shape[:2]
    if w != grid.width or h != grid.height:
        raise ConfigurationError(
            f"grid describes a {grid.width}x{grid.height} raster, got {w}x{h}"
        )
    pad_spec = [(0, grid.pad_bottom), (0, grid.pad_right)] + [(0, 0)] * (img.ndim - 2)
    padded = np.pad(img, pad_spec, mode="constant")
    tiles = []
    for x0, y0 in grid.origins():
        tiles.append(padded[y0 : y0 + grid.tile_h, x0 : x0 + grid.tile_w].copy())
    return tiles


def stitch(tiles: list[np.ndarray], grid: TileGrid) -> np.ndarray:
    """Reassemble tiles produced by :func:`tile`, stripping padding; bit-exact."""
    if len(tiles) != grid.cols * grid.rows:
        raise IntegrityError(f"expected {grid.cols * grid.rows} tiles, got {len(tiles)}")
    first = tiles[0]
    for i, t in enumerate(tiles):
        if t.shape[:2] != (grid.tile_h, grid.tile_w):
            raise IntegrityError(f"tile {i} has shape {t.shape[:2]}, expected {(grid.tile_h, grid.tile_w)}")
    out_shape = (grid.rows * grid.tile_h, grid.cols * grid.tile_w) + first.shape[2:]
    out = np.zeros(out_shape, dtype=first.dtype)
    for t, (x0, y0) in zip(tiles, grid.origins()):
        out[y0 : y0 + grid.tile_h, x0 : x0 + grid.tile_w] = t
    return out[: grid.height, : grid.width].copy()


def read_png(path: str | Path) -> np.ndarray:
    """Read an 8-bit PNG as uint8; palette images are expanded to RGB."""
    with Image.open(path) as im:
        if im.mode == "P":
            im = im.convert("RGB")
        elif im.mode not in ("L", "RGB", "RGBA"):
            im = im.convert("RGB")
        return np.asarray(im, dtype=np.uint8).copy()


def write_png(path: str | Path, img: np.ndarray) -> None:
    """Write a gray / RGB / RGBA uint8 raster as a lossless PNG."""
    arr = np.asarray(img)
    if arr.dtype != np.uint8:
        raise ConfigurationError("write_png expects uint8 data; quantize first")
    n = channel_count(arr)
    mode = {1: "L", 3: "RGB", 4: "RGBA"}[n]
    if arr.ndim == 3 and n == 1:
        arr = arr[:, :, 0]
    Image.fromarray(arr, mode=mode).save(path, format="PNG")
