"""Body25 pose parsing and the hip-center / standardize preprocessing chain.

A detection frame carries 25 joints of (x, y, confidence); confidence 0
marks an undetected joint.  Preprocessing centers every frame on the
MidHip joint (index 8), drops that joint, standardizes each remaining
coordinate with training-split statistics, and flattens to 48 values in
the documented order: joints 0..7 then 9..24, x before y.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import DataError

BODY25_NAMES = (
    "Nose", "Neck", "RShoulder", "RElbow", "RWrist", "LShoulder", "LElbow", "LWrist",
    "MidHip", "RHip", "RKnee", "RAnkle", "LHip", "LKnee", "LAnkle", "REye", "LEye",
    "REar", "LEar", "LBigToe", "LSmallToe", "LHeel", "RBigToe", "RSmallToe", "RHeel",
)
N_JOINTS = 25
MIDHIP = 8
KEPT_JOINTS = tuple(j for j in range(N_JOINTS) if j != MIDHIP)
N_KEPT = len(KEPT_JOINTS)  # 24
POSE_DIM = 2 * N_KEPT  # 48

POSE_CSV_HEADER = ["frame_id"] + [
    f"j{j}_{axis}" for j in range(N_JOINTS) for axis in ("x", "y", "c")
]


@dataclass
class PoseFrame:
    """One detection frame: 25 joints of (x, y, confidence)."""

    frame_id: int
    joints: np.ndarray  # (25, 3) float64

    def __post_init__(self) -> None:
        self.joints = np.asarray(self.joints, dtype=np.float64)
        if self.joints.shape != (N_JOINTS, 3):
            raise DataError(f"pose frame needs shape (25, 3), got {self.joints.shape}")

    @property
    def xy(self) -> np.ndarray:
        return self.joints[:, :2]

    @property
    def confidence(self) -> np.ndarray:
        return self.joints[:, 2]

    def detected(self, joint: int) -> bool:
        return self.joints[joint, 2] > 0.0


def load_pose_file(path) -> list[PoseFrame]:
    """Parse a pose CSV into frames sorted by ascending frame id."""
    path = Path(path)
    frames = []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise DataError(f"{path}: empty pose file")
        if len(header) != len(POSE_CSV_HEADER):
            raise DataError(
                f"{path}: header has {len(header)} columns, expected {len(POSE_CSV_HEADER)}"
            )
        for row in reader:
            if not row:
                continue
            line = reader.line_num
            if len(row) != len(POSE_CSV_HEADER):
                raise DataError(f"{path}:{line}: row has {len(row)} columns, expected {len(POSE_CSV_HEADER)}")
            try:
                frame_id = int(row[0])
                values = np.array(row[1:], dtype=np.float64)
            except ValueError as exc:
                raise DataError(f"{path}:{line}: {exc}") from exc
            if not np.all(np.isfinite(values)):
                raise DataError(f"{path}:{line}: non-finite joint value")
            joints = values.reshape(N_JOINTS, 3)
            conf = joints[:, 2]
            if np.any(conf < 0.0) or np.any(conf > 1.0):
                raise DataError(f"{path}:{line}: confidence outside [0, 1]")
            frames.append(PoseFrame(frame_id=frame_id, joints=joints))
    frames.sort(key=lambda f: f.frame_id)
    return frames


def save_pose_file(path, frames: Iterable[PoseFrame]) -> None:
    with open(path, "w", newline="") as fh:
        fh.write(",".join(POSE_CSV_HEADER) + "\n")
        for frame in frames:
            cells = [str(frame.frame_id)]
            cells.extend(repr(float(v)) for v in frame.joints.reshape(-1))
            fh.write(",".join(cells) + "\n")


def center_on_hip(frame: PoseFrame) -> PoseFrame:
    """Subtract the MidHip position from every detected joint.

    Undetected joints keep their raw coordinates (their zero confidence
    already flags them).  A frame whose MidHip is undetected cannot be
    centered and is rejected.
    """
    if not frame.detected(MIDHIP):
        raise DataError(f"frame {frame.frame_id}: MidHip undetected, cannot center")
    joints = frame.joints.copy()
    hip = joints[MIDHIP, :2].copy()
    detected = joints[:, 2] > 0.0
    joints[detected, :2] -= hip
    return PoseFrame(frame_id=frame.frame_id, joints=joints)


@dataclass
class PoseNormStats:
    """Per-coordinate mean/std over hip-centered training frames.

    Arrays follow the 48-slot output layout; statistics ignore
    zero-confidence detections.
    """

    mean: np.ndarray  # (48,)
    std: np.ndarray  # (48,)
    split_id: str = ""
    frame_count: int = 0

    def __post_init__(self) -> None:
        self.mean = np.asarray(self.mean, dtype=np.float64)
        self.std = np.asarray(self.std, dtype=np.float64)
        if self.mean.shape != (POSE_DIM,) or self.std.shape != (POSE_DIM,):
            raise DataError(f"stats need {POSE_DIM} means and stds")
        if np.any(self.std <= 0.0):
            raise DataError("stats contain a non-positive standard deviation")

    def save(self, path) -> None:
        payload = {
            "mean": [float(v) for v in self.mean],
            "std": [float(v) for v in self.std],
            "split_id": self.split_id,
            "frame_count": self.frame_count,
        }
        with open(path, "w") as fh:
            json.dump(payload, fh, indent=2)
            fh.write("\n")

    @classmethod
    def load(cls, path) -> "PoseNormStats":
        with open(path) as fh:
            payload = json.load(fh)
        return cls(
            mean=np.array(payload["mean"], dtype=np.float64),
            std=np.array(payload["std"], dtype=np.float64),
            split_id=payload.get("split_id", ""),
            frame_count=int(payload.get("frame_count", 0)),
        )


def _stack_kept(frames: Sequence[PoseFrame]):
    xy = np.stack([f.joints[KEPT_JOINTS, :2] for f in frames])  # (F, 24, 2)
    conf = np.stack([f.joints[KEPT_JOINTS, 2] for f in frames])  # (F, 24)
    return xy, conf


def fit_norm_stats(frames: Sequence[PoseFrame], split_id: str = "") -> PoseNormStats:
    """Population mean/std per coordinate over confident, hip-centered joints."""
    if not frames:
        raise DataError("cannot fit pose statistics on zero frames")
    xy, conf = _stack_kept(frames)
    observed = conf > 0.0  # (F, 24)
    counts = observed.sum(axis=0)
    if np.any(counts < 2):
        joint = KEPT_JOINTS[int(np.argmin(counts))]
        raise DataError(
            f"joint {joint} ({BODY25_NAMES[joint]}) has {int(counts.min())} confident "
            f"observations, need at least 2"
        )
    w = observed[:, :, None].astype(np.float64)
    mean = (xy * w).sum(axis=0) / counts[:, None]
    var = (((xy - mean) ** 2) * w).sum(axis=0) / counts[:, None]
    std = np.sqrt(var)
    if np.any(std <= 0.0):
        flat_idx = int(np.argmin(std.reshape(-1)))
        joint = KEPT_JOINTS[flat_idx // 2]
        axis = "xy"[flat_idx % 2]
        raise DataError(f"joint {joint} ({BODY25_NAMES[joint]}) {axis}-coordinate is constant; zero std")
    return PoseNormStats(
        mean=mean.reshape(-1), std=std.reshape(-1), split_id=split_id, frame_count=len(frames)
    )


def normalize_pose(frame: PoseFrame, stats: PoseNormStats) -> np.ndarray:
    """Standardize a hip-centered frame to the 48-value network input.

    Undetected joints emit exactly 0.0 (the per-coordinate mean), the
    least-informative imputation.
    """
    xy = frame.joints[KEPT_JOINTS, :2].reshape(-1)
    observed = np.repeat(frame.joints[KEPT_JOINTS, 2] > 0.0, 2)
    out = np.zeros(POSE_DIM, dtype=np.float64)
    out[observed] = (xy[observed] - stats.mean[observed]) / stats.std[observed]
    if not np.all(np.isfinite(out)):
        raise DataError(f"frame {frame.frame_id}: normalization produced non-finite values")
    return out
