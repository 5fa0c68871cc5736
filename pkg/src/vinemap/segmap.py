"""Per-modality semantic class maps and segmentation backends.

Class maps are uint8 label rasters over four classes.  Segmentation
itself is pluggable: masks produced elsewhere can be ingested from
indexed PNGs, and a small multinomial-logistic pixel classifier serves
as a self-contained baseline backend (per-pixel features: raw channel
values plus mean/std over a 9x9 neighborhood).
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from enum import IntEnum
from pathlib import Path

import numpy as np
from PIL import Image
from scipy import ndimage

from .errors import (
    ConfigurationError,
    ContractError,
    FormatError,
    SegmentationBackendError,
    TrainingDataError,
)
from .raster import TileGrid, channel_count

NEIGHBORHOOD = 9  # k x k window for the local mean/std features
DEFAULT_HALO = 16  # context added around tiles during tiled inference


class ClassLabel(IntEnum):
    SHADOW = 0
    GROUND = 1
    HEALTHY = 2
    SYMPTOM = 3


CLASS_PALETTE = {
    ClassLabel.SHADOW: (0, 0, 0),
    ClassLabel.GROUND: (139, 69, 19),
    ClassLabel.HEALTHY: (0, 128, 0),
    ClassLabel.SYMPTOM: (255, 215, 0),
}


def _palette_bytes(palette: dict) -> bytes:
    flat = []
    for label in sorted(palette, key=int):
        flat.extend(palette[label])
    return bytes(flat)


def save_mask(labels: np.ndarray, path: str | Path, palette: dict | None = None) -> None:
    """Write a label raster as an 8-bit indexed PNG with the class palette."""
    palette = palette or CLASS_PALETTE
    labels = np.asarray(labels)
    if labels.ndim != 2 or labels.dtype != np.uint8:
        raise ContractError("mask must be a 2-D uint8 label raster")
    if labels.max(initial=0) >= len(palette):
        raise ContractError(f"label code {labels.max()} outside the {len(palette)}-entry palette")
    im = Image.fromarray(labels, mode="P")
    im.putpalette(_palette_bytes(palette))
    im.save(path, format="PNG")


def load_mask(path: str | Path, palette: dict | None = None) -> np.ndarray:
    """Read an indexed (or plain RGB) PNG back into class codes.

    Any color not in the palette raises FormatError naming the RGB
    triple, so foreign masks fail loudly instead of mislabeling.
    """
    palette = palette or CLASS_PALETTE
    color_to_code = {tuple(rgb): int(label) for label, rgb in palette.items()}
    with Image.open(path) as im:
        if im.mode == "P":
            idx = np.asarray(im, dtype=np.uint8)
            pal = im.getpalette() or []
            pal = np.array(pal + [0] * (768 - len(pal)), dtype=np.uint8).reshape(256, 3)
            out = np.zeros_like(idx)
            for value in np.unique(idx):
                rgb = tuple(int(v) for v in pal[value])
                if rgb not in color_to_code:
                    raise FormatError(f"mask color {rgb} is not in the class palette")
                out[idx == value] = color_to_code[rgb]
            return out
        rgb_img = np.asarray(im.convert("RGB"), dtype=np.uint8)
    out = np.zeros(rgb_img.shape[:2], dtype=np.uint8)
    assigned = np.zeros(rgb_img.shape[:2], dtype=bool)
    for rgb, code in color_to_code.items():
        sel = np.all(rgb_img == np.array(rgb, dtype=np.uint8), axis=2)
        out[sel] = code
        assigned |= sel
    if not assigned.all():
        ys, xs = np.nonzero(~assigned)
        bad = tuple(int(v) for v in rgb_img[ys[0], xs[0]])
        raise FormatError(f"mask color {bad} is not in the class palette")
    return out


@dataclass
class BaselineModel:
    """Multinomial logistic pixel classifier over local image statistics."""

    weights: np.ndarray  # (n_classes, feature_dim)
    biases: np.ndarray  # (n_classes,)
    k: int = NEIGHBORHOOD
    seed: int = 0
    epochs: int = 0
    lr: float = 0.0
    train_accuracy: float = 0.0

    @property
    def feature_dim(self) -> int:
        return self.weights.shape[1]

    @property
    def n_channels(self) -> int:
        return self.feature_dim // 3

    def save(self, path: str | Path) -> None:
        payload = {
            "feature_dim": self.feature_dim,
            "k": self.k,
            "classes": [int(c) for c in ClassLabel],
            "weights": self.weights.tolist(),
            "biases": self.biases.tolist(),
            "seed": self.seed,
            "epochs": self.epochs,
            "lr": self.lr,
            "train_accuracy": self.train_accuracy,
        }
        Path(path).write_text(json.dumps(payload, indent=2))

    @classmethod
    def load(cls, path: str | Path) -> "BaselineModel":
        d = json.loads(Path(path).read_text())
        return cls(
            weights=np.array(d["weights"], dtype=np.float64),
            biases=np.array(d["biases"], dtype=np.float64),
            k=d["k"],
            seed=d["seed"],
            epochs=d["epochs"],
            lr=d["lr"],
            train_accuracy=d.get("train_accuracy", 0.0),
        )


def pixel_features(img: np.ndarray, k: int = NEIGHBORHOOD) -> np.ndarray:
    """Per-pixel feature stack: value, k x k mean and std per channel.

    Returns (h*w, 3*channels) float64; intensities scaled to [0, 1].
    Neighborhoods reflect at the raster border.
    """
    if img.ndim == 2:
        planes = [img]
    else:
        planes = [img[:, :, c] for c in range(img.shape[2])]
    cols = []
    for plane in planes:
        p = plane.astype(np.float64) / 255.0
        mean = ndimage.uniform_filter(p, size=k, mode="reflect")
        sq = ndimage.uniform_filter(p * p, size=k, mode="reflect")
        std = np.sqrt(np.maximum(sq - mean * mean, 0.0))
        cols.extend([p, mean, std])
    return np.stack([c.ravel() for c in cols], axis=1)


def _softmax(z: np.ndarray) -> np.ndarray:
    z = z - z.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def train_baseline(
    patches: list[tuple[np.ndarray, np.ndarray]],
    epochs: int = 12,
    lr: float = 0.5,
    seed: int = 0,
    batch_size: int = 512,
    max_pixels: int = 200_000,
) -> BaselineModel:
    """Fit the baseline classifier by minibatch SGD on labeled rasters.

    Deterministic for a fixed seed; raises TrainingDataError when any
    class has no pixels in the training set.
    """
    if not patches:
        raise TrainingDataError("no training patches supplied")
    feats = []
    labs = []
    n_ch = channel_count(patches[0][0])
    for img, labels in patches:
        if channel_count(img) != n_ch:
            raise ConfigurationError("all training patches must share a channel layout")
        if img.shape[:2] != labels.shape:
            raise ContractError("image and label raster dimensions differ")
        feats.append(pixel_features(img))
        labs.append(np.asarray(labels).ravel())
    x = np.vstack(feats)
    y = np.concatenate(labs).astype(np.int64)

    present = set(np.unique(y).tolist())
    missing = [c.name for c in ClassLabel if int(c) not in present]
    if missing:
        raise TrainingDataError(f"training data lacks classes: {', '.join(missing)}")

    rng = np.random.default_rng(seed)
    if len(x) > max_pixels:
        pick = rng.choice(len(x), size=max_pixels, replace=False)
        x, y = x[pick], y[pick]

    n_classes = len(ClassLabel)
    w = np.zeros((n_classes, x.shape[1]))
    b = np.zeros(n_classes)
    n = len(x)
    for _ in range(epochs):
        order = rng.permutation(n)
        for start in range(0, n, batch_size):
            idx = order[start : start + batch_size]
            xb, yb = x[idx], y[idx]
            probs = _softmax(xb @ w.T + b)
            probs[np.arange(len(idx)), yb] -= 1.0
            grad_w = probs.T @ xb / len(idx)
            grad_b = probs.mean(axis=0)
            w -= lr * grad_w
            b -= lr * grad_b

    model = BaselineModel(weights=w, biases=b, seed=seed, epochs=epochs, lr=lr)
    if epochs > 0:
        scores = x @ w.T + b
        model.train_accuracy = float(np.mean(scores.argmax(axis=1) == y))
    return model


def predict(model: BaselineModel, img: np.ndarray) -> np.ndarray:
    """Per-pixel argmax class map; ties break to the lowest class code."""
    if channel_count(img) != model.n_channels:
        raise ConfigurationError(
            f"model expects {model.n_channels}-channel input, got {channel_count(img)}"
        )
    scores = pixel_features(img, model.k) @ model.weights.T + model.biases
    return scores.argmax(axis=1).astype(np.uint8).reshape(img.shape[:2])


class BaselineBackend:
    """Segments crops with a BaselineModel; position independent."""

    def __init__(self, model: BaselineModel):
        self.model = model

    def segment(self, img: np.ndarray, region: tuple[int, int, int, int]) -> np.ndarray:
        return predict(self.model, img)


class ExternalMaskBackend:
    """Serves slices of a precomputed full-frame mask (ingested PNG)."""

    def __init__(self, mask: np.ndarray):
        self.mask = np.asarray(mask)

    def segment(self, img: np.ndarray, region: tuple[int, int, int, int]) -> np.ndarray:
        y0, y1, x0, x1 = region
        if y1 > self.mask.shape[0] or x1 > self.mask.shape[1]:
            raise ContractError("requested region exceeds the provided mask")
        return self.mask[y0:y1, x0:x1]


def segment_tiled(
    backend,
    img: np.ndarray,
    grid: TileGrid | None = None,
    halo: int = DEFAULT_HALO,
) -> np.ndarray:
    """Segment a raster tile by tile with a context halo.

    Each tile is expanded by ``halo`` pixels of real image content
    (clamped at the raster border), segmented, and cropped back before
    placement, which removes sliding-window edge effects for any backend
    whose receptive field fits in twice the halo.
    """
    h, w = img.shape[:2]
    if grid is None:
        grid = TileGrid.for_image(w, h)
    if grid.width != w or grid.height != h:
        raise ConfigurationError(f"grid describes {grid.width}x{grid.height}, image is {w}x{h}")
    out = np.zeros((h, w), dtype=np.uint8)
    for col_row, (x0, y0) in enumerate(grid.origins()):
        x1 = min(x0 + grid.tile_w, w)
        y1 = min(y0 + grid.tile_h, h)
        if x0 >= w or y0 >= h:
            continue
        ex0, ey0 = max(x0 - halo, 0), max(y0 - halo, 0)
        ex1, ey1 = min(x1 + halo, w), min(y1 + halo, h)
        crop = img[ey0:ey1, ex0:ex1]
        try:
            labels = backend.segment(crop, (ey0, ey1, ex0, ex1))
        except Exception as exc:
            col = col_row % grid.cols
            row = col_row // grid.cols
            raise SegmentationBackendError(
                f"backend failed on tile col={col} row={row} "
                f"(pixels x:{x0}-{x1} y:{y0}-{y1}): {exc}"
            ) from exc
        if labels.shape != crop.shape[:2]:
            raise SegmentationBackendError(
                f"backend returned {labels.shape} for a {crop.shape[:2]} crop"
            )
        out[y0:y1, x0:x1] = labels[y0 - ey0 : y1 - ey0, x0 - ex0 : x1 - ex0]
    return out
