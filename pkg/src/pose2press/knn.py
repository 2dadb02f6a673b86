"""K=1 nearest-neighbor pressure regression with a confidence-masked distance.

The distance between two poses averages squared joint displacements over
the joints both detectors are confident about:

    d(a, b) = sum_j ||a_j - b_j||^2 * [c_j^a * c_j^b > 0]
              / (sum_j [c_j^a * c_j^b > 0] + eps)

Pairs sharing no confident joint are treated as incomparable (infinite
distance) rather than the epsilon-guarded 0 the formula would produce,
which would spuriously rank them first.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .errors import ConfigError, DataError
from .pressure import PressureGrid

EPSILON = 1e-8


def pose_distance(a_xy, a_conf, b_xy, b_conf, eps: float = EPSILON) -> float:
    """Confidence-masked mean squared joint distance; inf when incomparable."""
    a_xy = np.asarray(a_xy, dtype=np.float64)
    b_xy = np.asarray(b_xy, dtype=np.float64)
    a_conf = np.asarray(a_conf, dtype=np.float64)
    b_conf = np.asarray(b_conf, dtype=np.float64)
    if a_xy.shape != b_xy.shape or a_xy.shape[:1] != a_conf.shape or a_conf.shape != b_conf.shape:
        raise DataError(
            f"pose_distance shape mismatch: {a_xy.shape}/{a_conf.shape} vs {b_xy.shape}/{b_conf.shape}"
        )
    shared = (a_conf * b_conf) > 0.0
    count = int(shared.sum())
    if count == 0:
        return float("inf")
    sq = ((a_xy - b_xy) ** 2).sum(axis=-1)
    return float((sq * shared).sum() / (count + eps))


@dataclass
class PoseIndexEntry:
    frame_id: int
    coords: np.ndarray  # (24, 2) hip-centered, standardized
    conf: np.ndarray  # (24,)
    grid: PressureGrid  # cleaned kPa pressure of this frame
    take_label: str = ""


@dataclass
class PoseIndex:
    """Immutable search structure over temporally subsampled training frames."""

    entries: list
    subsample_factor: int
    split_id: str = ""
    _coords: Optional[np.ndarray] = field(default=None, repr=False)
    _conf: Optional[np.ndarray] = field(default=None, repr=False)

    def __post_init__(self) -> None:
        if self.entries:
            self.entries.sort(key=lambda e: (e.take_label, e.frame_id))
            self._coords = np.stack([e.coords for e in self.entries])
            self._conf = np.stack([e.conf for e in self.entries])

    def __len__(self) -> int:
        return len(self.entries)


def build_index(samples: Sequence[PoseIndexEntry], factor: int = 5, split_id: str = "") -> PoseIndex:
    """Keep every ``factor``-th sample (positions 0, factor, 2*factor, ...)."""
    if factor < 1:
        raise ConfigError(f"subsample factor must be >= 1, got {factor}")
    kept = [entry for position, entry in enumerate(samples) if position % factor == 0]
    return PoseIndex(entries=kept, subsample_factor=factor, split_id=split_id)


def knn_predict(index: PoseIndex, query_xy, query_conf, k: int = 1) -> PoseIndexEntry:
    """Entry with the minimum distance to the query; ties go to the lowest frame id."""
    if k != 1:
        raise ConfigError("only K=1 is supported")
    if not index.entries:
        raise DataError("cannot query an empty index")
    query_xy = np.asarray(query_xy, dtype=np.float64)
    query_conf = np.asarray(query_conf, dtype=np.float64)
    shared = (index._conf * query_conf) > 0.0  # (N, J)
    counts = shared.sum(axis=1)
    sq = ((index._coords - query_xy) ** 2).sum(axis=-1)  # (N, J)
    with np.errstate(invalid="ignore"):
        distances = (sq * shared).sum(axis=1) / (counts + EPSILON)
    distances[counts == 0] = np.inf
    best = int(np.argmin(distances))  # entries sorted by frame id: first win = lowest
    if not np.isfinite(distances[best]):
        raise DataError("query shares no confident joints with any index entry")
    return index.entries[best]


def save_index(path, index: PoseIndex) -> None:
    """Persist the frame references; grids are re-read from source files on load."""
    payload = {
        "subsample_factor": index.subsample_factor,
        "split_id": index.split_id,
        "entries": [
            {"take_label": e.take_label, "frame_id": e.frame_id} for e in index.entries
        ],
    }
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2)
        fh.write("\n")


def load_index_refs(path) -> dict:
    with open(path) as fh:
        payload = json.load(fh)
    if "entries" not in payload or "subsample_factor" not in payload:
        raise DataError(f"{path}: not an index file")
    return payload
