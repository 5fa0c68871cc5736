"""Run manifests: config snapshot, input digests, runtimes, outputs."""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

# Wall-clock fields are the one legitimately irreproducible part of a
# run; digests for reproducibility checks are computed with them removed.
VOLATILE_KEYS = {"runtime_seconds", "runtimes", "runtime"}


def sha256_of(path: str | Path) -> str:
    h = hashlib.sha256()
    h.update(Path(path).read_bytes())
    return h.hexdigest()


def _strip_volatile(obj):
    if isinstance(obj, dict):
        return {k: _strip_volatile(v) for k, v in obj.items() if k not in VOLATILE_KEYS}
    if isinstance(obj, list):
        return [_strip_volatile(v) for v in obj]
    return obj


def stable_digest(path: str | Path) -> str:
    """Content digest; JSON files are canonicalized minus volatile keys."""
    path = Path(path)
    if path.suffix == ".json":
        data = _strip_volatile(json.loads(path.read_text()))
        canon = json.dumps(data, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canon.encode("utf-8")).hexdigest()
    return sha256_of(path)


@dataclass
class RunManifest:
    command: str
    version: str
    config: dict
    inputs: dict[str, str] = field(default_factory=dict)
    outputs: dict[str, str] = field(default_factory=dict)
    runtimes: dict[str, float] = field(default_factory=dict)

    def add_input(self, path: str | Path) -> None:
        self.inputs[str(path)] = sha256_of(path)

    def add_output(self, path: str | Path) -> None:
        self.outputs[str(path)] = stable_digest(path)

    def to_dict(self) -> dict:
        return {
            "command": self.command,
            "version": self.version,
            "config": self.config,
            "inputs": self.inputs,
            "outputs": self.outputs,
            "runtimes": self.runtimes,
        }

    def write(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True))
