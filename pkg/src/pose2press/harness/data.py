"""Loading and pairing of pose/pressure takes for training and evaluation."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from ..errors import DataError
from ..pose import PoseFrame, PoseNormStats, center_on_hip, load_pose_file, normalize_pose
from ..pressure import (
    PressureGrid,
    PressureNormConfig,
    clean_and_mask,
    load_mask_file,
    load_pressure_file,
    normalize_pressure,
)
from .manifest import Manifest, TakeRef


@dataclass
class FramePair:
    """One synchronized (hip-centered pose, cleaned pressure) sample."""

    ref: TakeRef
    frame_id: int
    pose: PoseFrame
    pressure: PressureGrid
    weight_kg: float


@dataclass
class TakeData:
    ref: TakeRef
    pairs: list
    mask: np.ndarray
    skipped_frames: int  # undetected-MidHip poses that could not be centered


def load_take(manifest: Manifest, ref: TakeRef) -> TakeData:
    take = manifest.take(ref)
    weight = manifest.subject(ref.subject).weight_kg
    poses = load_pose_file(manifest.resolve(take.pose_file))
    raw_grids = load_pressure_file(manifest.resolve(take.pressure_file))
    mask = load_mask_file(manifest.resolve(take.mask_file))
    grids = {g.frame_id: clean_and_mask(g) for g in raw_grids}

    pairs = []
    skipped = 0
    for pose in poses:
        grid = grids.get(pose.frame_id)
        if grid is None:
            continue  # pose frame without a pressure counterpart
        try:
            centered = center_on_hip(pose)
        except DataError:
            skipped += 1
            continue
        if not np.array_equal(grid.mask, mask):
            raise DataError(
                f"{ref.label} frame {pose.frame_id}: pressure NaN layout disagrees with the mask file"
            )
        pairs.append(FramePair(ref=ref, frame_id=pose.frame_id, pose=centered,
                               pressure=grid, weight_kg=weight))
    if not pairs:
        raise DataError(f"take {ref.label} yielded no usable frame pairs")
    return TakeData(ref=ref, pairs=pairs, mask=mask, skipped_frames=skipped)


def load_takes(manifest: Manifest, refs: Sequence[TakeRef]):
    """Concatenated pairs over takes; all takes must share one footmask."""
    all_pairs = []
    mask = None
    skipped = 0
    for ref in refs:
        data = load_take(manifest, ref)
        if mask is None:
            mask = data.mask
        elif not np.array_equal(mask, data.mask):
            raise DataError(f"take {ref.label} uses a different footmask than earlier takes")
        all_pairs.extend(data.pairs)
        skipped += data.skipped_frames
    if mask is None:
        raise DataError("no takes given")
    return all_pairs, mask, skipped


def norm_config_for(manifest: Manifest, subject_id: str, global_max: float) -> PressureNormConfig:
    return PressureNormConfig(
        subject_weight_kg=manifest.subject(subject_id).weight_kg,
        global_max=global_max,
    )


def build_arrays(pairs: Sequence[FramePair], stats: PoseNormStats, manifest: Manifest,
                 global_max: float, dtype=np.float32):
    """Network-ready (X, Y) arrays: standardized poses, [0,1] pressures."""
    n = len(pairs)
    x = np.empty((n, 48), dtype=dtype)
    y = np.empty((n, *pairs[0].pressure.values.shape), dtype=dtype)
    cfgs = {}
    for i, pair in enumerate(pairs):
        x[i] = normalize_pose(pair.pose, stats)
        cfg = cfgs.get(pair.ref.subject)
        if cfg is None:
            cfg = norm_config_for(manifest, pair.ref.subject, global_max)
            cfgs[pair.ref.subject] = cfg
        y[i] = normalize_pressure(pair.pressure, cfg).values
    return x, y
