"""Hamming-distance matching of binary descriptors."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import ContractError

_POPCOUNT = np.array([bin(i).count("1") for i in range(256)], dtype=np.uint8)
_CHUNK = 512


@dataclass(frozen=True)
class Match:
    query_index: int
    train_index: int
    distance: int


def _as_words(descriptors: np.ndarray) -> np.ndarray:
    """View packed descriptor bytes as uint64 words (zero padded)."""
    n, b = descriptors.shape
    pad = (-b) % 8
    if pad:
        descriptors = np.pad(descriptors, ((0, 0), (0, pad)))
    return np.ascontiguousarray(descriptors).view(np.uint64)


def hamming_matrix(qd: np.ndarray, td: np.ndarray) -> np.ndarray:
    """Pairwise Hamming distances between packed descriptor sets."""
    qd = np.atleast_2d(qd)
    td = np.atleast_2d(td)
    if qd.shape[1] != td.shape[1]:
        raise ContractError("descriptor sets must have equal byte length")
    out = np.empty((len(qd), len(td)), dtype=np.uint16)
    popcount = getattr(np, "bitwise_count", None)
    if popcount is not None:
        qw = _as_words(qd)
        tw = _as_words(td)
        for start in range(0, len(qd), _CHUNK):
            xor = np.bitwise_xor(qw[start : start + _CHUNK, None, :], tw[None, :, :])
            out[start : start + _CHUNK] = popcount(xor).sum(axis=2, dtype=np.uint16)
        return out
    for start in range(0, len(qd), _CHUNK):
        block = qd[start : start + _CHUNK]
        xor = np.bitwise_xor(block[:, None, :], td[None, :, :])
        out[start : start + _CHUNK] = _POPCOUNT[xor].sum(axis=2, dtype=np.uint16)
    return out


def keypoints_to_dicts(keypoints) -> list[dict]:
    """Debug-dump form: one {x, y, scale, orientation, response} per point."""
    return [
        {
            "x": kp.x,
            "y": kp.y,
            "scale": kp.scale,
            "orientation": kp.orientation,
            "response": kp.response,
        }
        for kp in keypoints
    ]


def matches_to_dicts(matches: list[Match]) -> list[dict]:
    """Debug-dump form: one {q, t, dist} per match."""
    return [{"q": m.query_index, "t": m.train_index, "dist": m.distance} for m in matches]


def match(qd: np.ndarray, td: np.ndarray, distance_threshold: int) -> list[Match]:
    """Threshold-preselected nearest-neighbor matches.

    For each query the Hamming nearest neighbor is retained iff its
    distance is <= ``distance_threshold``; a mutual-best cross-check
    enforces one-to-one matching.  Ties resolve to the lowest index, so
    the result is deterministic.
    """
    if len(qd) == 0 or len(td) == 0:
        return []
    dist = hamming_matrix(qd, td)
    best_t = dist.argmin(axis=1)
    best_q = dist.argmin(axis=0)
    matches = []
    for q, t in enumerate(best_t):
        d = int(dist[q, t])
        if d <= distance_threshold and best_q[t] == q:
            matches.append(Match(query_index=q, train_index=int(t), distance=d))
    return matches
