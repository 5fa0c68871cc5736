"""Run configuration: flat dotted-key text files plus seed derivation.

Config files hold ``key = value`` lines (# comments allowed); lists are
comma separated.  Command-line flags override file values.  All
randomness in a run flows from the single root seed, fanned out per
stage through a fixed derivation so every stage is replayable on its
own.
"""

from __future__ import annotations

import zlib
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .augment import AugmentationGrid
from .errors import ConfigurationError
from .registration.pipeline import FeatureParams, RegistrationConfig
from .segmap import DEFAULT_HALO


def derive_seed(root_seed: int, *labels) -> int:
    """Stable per-stage seed from the root seed and a label path."""
    entropy = [int(root_seed) & 0xFFFFFFFF]
    for label in labels:
        entropy.append(zlib.crc32(str(label).encode("utf-8")))
    return int(np.random.SeedSequence(entropy).generate_state(1)[0])


def derive_rng(root_seed: int, *labels) -> np.random.Generator:
    return np.random.default_rng(derive_seed(root_seed, *labels))


def parse_config_text(text: str) -> dict[str, str]:
    out: dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigurationError(f"config line {lineno} is not 'key = value': {raw!r}")
        key, value = line.split("=", 1)
        out[key.strip()] = value.strip()
    return out


def _ints(value: str) -> tuple[int, ...]:
    return tuple(int(v.strip()) for v in value.split(",") if v.strip())


def _floats(value: str) -> tuple[float, ...]:
    return tuple(float(v.strip()) for v in value.split(",") if v.strip())


@dataclass(frozen=True)
class PipelineConfig:
    """Every stage's knobs with working defaults."""

    seed: int = 0
    registration: RegistrationConfig = field(default_factory=RegistrationConfig)
    tile_w: int = 480
    tile_h: int = 360
    halo: int = DEFAULT_HALO
    eval_window: int = 64
    eval_stride: int = 64
    fusion_modes: tuple[str, ...] = ("AND", "OR")
    augmentation: AugmentationGrid = field(default_factory=AugmentationGrid)

    def __post_init__(self):
        for mode in self.fusion_modes:
            if mode not in ("AND", "OR"):
                raise ConfigurationError(f"unknown fusion mode {mode!r} (use AND / OR)")
        if self.tile_w <= 0 or self.tile_h <= 0 or self.halo < 0:
            raise ConfigurationError("tile dimensions must be positive and halo >= 0")
        if self.eval_window < 1 or self.eval_stride < 1:
            raise ConfigurationError("evaluation window and stride must be >= 1")

    @classmethod
    def from_mapping(cls, mapping: dict[str, str]) -> "PipelineConfig":
        known = {
            "seed",
            "registration.match_thresholds",
            "registration.ransac_tolerances",
            "registration.corner_bound",
            "registration.max_iterations",
            "registration.min_matches",
            "features.octaves",
            "features.sublevels",
            "features.threshold",
            "features.max_keypoints",
            "tile.width",
            "tile.height",
            "segment.halo",
            "eval.window",
            "eval.stride",
            "fusion.modes",
            "augment.overlap",
            "augment.rotations",
            "augment.scales",
            "augment.brightness",
            "augment.patch_w",
            "augment.patch_h",
        }
        unknown = set(mapping) - known
        if unknown:
            raise ConfigurationError(f"unknown config keys: {', '.join(sorted(unknown))}")

        g = mapping.get
        features = FeatureParams(
            octaves=int(g("features.octaves", 4)),
            sublevels=int(g("features.sublevels", 4)),
            detector_threshold=float(g("features.threshold", 0.001)),
            max_keypoints=int(g("features.max_keypoints", 1200)),
        )
        registration = RegistrationConfig(
            match_threshold_schedule=_ints(g("registration.match_thresholds", "40,55,70,90")),
            ransac_threshold_schedule=_floats(g("registration.ransac_tolerances", "2,4,6,10")),
            corner_displacement_bound=float(g("registration.corner_bound", 0.25)),
            max_iterations=int(g("registration.max_iterations", 10)),
            min_matches=int(g("registration.min_matches", 10)),
            features=features,
        )
        augmentation = AugmentationGrid(
            overlap_fraction=float(g("augment.overlap", 0.5)),
            rotations=_floats(g("augment.rotations", "0,30,60,90,120,150,180")),
            scales=_floats(g("augment.scales", "0.5,0.75,1.0,1.25,1.5")),
            brightness=_floats(g("augment.brightness", "0.8,0.9,1.0,1.1,1.2")),
            patch_w=int(g("augment.patch_w", 480)),
            patch_h=int(g("augment.patch_h", 360)),
        )
        return cls(
            seed=int(g("seed", 0)),
            registration=registration,
            tile_w=int(g("tile.width", 480)),
            tile_h=int(g("tile.height", 360)),
            halo=int(g("segment.halo", DEFAULT_HALO)),
            eval_window=int(g("eval.window", 64)),
            eval_stride=int(g("eval.stride", 64)),
            fusion_modes=tuple(
                m.strip() for m in g("fusion.modes", "AND,OR").split(",") if m.strip()
            ),
            augmentation=augmentation,
        )

    @classmethod
    def from_file(cls, path: str | Path) -> "PipelineConfig":
        return cls.from_mapping(parse_config_text(Path(path).read_text()))

    def with_seed(self, seed: int) -> "PipelineConfig":
        return replace(self, seed=seed)

    def to_dict(self) -> dict:
        reg = self.registration
        return {
            "seed": self.seed,
            "registration": {
                "match_thresholds": list(reg.match_threshold_schedule),
                "ransac_tolerances": list(reg.ransac_threshold_schedule),
                "corner_bound": reg.corner_displacement_bound,
                "max_iterations": reg.max_iterations,
                "min_matches": reg.min_matches,
                "features": {
                    "octaves": reg.features.octaves,
                    "sublevels": reg.features.sublevels,
                    "threshold": reg.features.detector_threshold,
                    "max_keypoints": reg.features.max_keypoints,
                },
            },
            "tile": {"width": self.tile_w, "height": self.tile_h},
            "segment": {"halo": self.halo},
            "eval": {"window": self.eval_window, "stride": self.eval_stride},
            "fusion": {"modes": list(self.fusion_modes)},
            "augment": {
                "overlap": self.augmentation.overlap_fraction,
                "rotations": list(self.augmentation.rotations),
                "scales": list(self.augmentation.scales),
                "brightness": list(self.augmentation.brightness),
                "patch_w": self.augmentation.patch_w,
                "patch_h": self.augmentation.patch_h,
            },
        }
