"""Synthetic pose/pressure dataset generator.

Poses follow smooth periodic trajectories around a fixed skeleton
template, with per-subject style (phase, amplitude, posture offsets) and
a per-take camera offset that hip-centering later removes.  Ground-truth
pressure is a deterministic smooth function of the lower-body joint
configuration: a fixed radial-basis mixture of per-center pressure
templates painted on the canonical footmask, load-shared between the feet
along the movement cycle, scaled by subject weight, plus bounded sensor
noise.  The mapping constants are frozen (seeded by a module constant),
so a dataset is a pure function of the user seed; identical seeds yield
byte-identical files.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..errors import ConfigError, DataError
from ..pose import MIDHIP, N_JOINTS, PoseFrame, save_pose_file
from ..pressure import (
    CLIP_KPA,
    COLS,
    FEET,
    ROWS,
    PressureGrid,
    canonical_footmask,
    save_mask_file,
    save_pressure_file,
)
from .manifest import Manifest, Session, Subject, Take, save_manifest

# constants of the pose->pressure law; changing this value changes every
# generated dataset
_GENERATOR_SEED = 70525

# joints whose configuration drives the pressure map (knees, ankles, toes, heels)
_DYNAMIC_JOINTS = (10, 11, 13, 14, 19, 21, 22, 24)
_N_CENTERS = 12
_HARMONICS = 3
_PERIOD_FRAMES = 120.0

# skeleton template, hip at origin, body units (y grows downward)
_BASE_SKELETON = np.array([
    (0.00, -1.95),   # 0 Nose
    (0.00, -1.60),   # 1 Neck
    (-0.35, -1.55),  # 2 RShoulder
    (-0.55, -1.10),  # 3 RElbow
    (-0.60, -0.65),  # 4 RWrist
    (0.35, -1.55),   # 5 LShoulder
    (0.55, -1.10),   # 6 LElbow
    (0.60, -0.65),   # 7 LWrist
    (0.00, 0.00),    # 8 MidHip
    (-0.20, 0.00),   # 9 RHip
    (-0.22, 0.85),   # 10 RKnee
    (-0.24, 1.70),   # 11 RAnkle
    (0.20, 0.00),    # 12 LHip
    (0.22, 0.85),    # 13 LKnee
    (0.24, 1.70),    # 14 LAnkle
    (-0.06, -2.00),  # 15 REye
    (0.06, -2.00),   # 16 LEye
    (-0.12, -1.95),  # 17 REar
    (0.12, -1.95),   # 18 LEar
    (0.28, 1.85),    # 19 LBigToe
    (0.34, 1.82),    # 20 LSmallToe
    (0.20, 1.78),    # 21 LHeel
    (-0.28, 1.85),   # 22 RBigToe
    (-0.34, 1.82),   # 23 RSmallToe
    (-0.20, 1.78),   # 24 RHeel
])

# larger amplitudes for distal joints
_MOBILITY = np.ones(N_JOINTS)
_MOBILITY[[3, 6]] = 1.8         # elbows
_MOBILITY[[4, 7]] = 2.6         # wrists
_MOBILITY[[10, 13]] = 1.4       # knees
_MOBILITY[[11, 14, 19, 20, 21, 22, 23, 24]] = 1.8  # ankles and feet
_MOBILITY[[0, 15, 16, 17, 18]] = 0.6  # head


@dataclass
class SyntheticSpec:
    n_subjects: int = 4
    takes: int = 2
    frames_per_take: int = 500
    seed: int = 42
    kind: str = "rbf-v1"

    def validate(self) -> None:
        if self.kind != "rbf-v1":
            raise ConfigError(f"unknown generator kind {self.kind!r}")
        if self.n_subjects < 1 or self.takes < 1 or self.frames_per_take < 1:
            raise ConfigError("n_subjects, takes, and frames_per_take must be positive")

    @classmethod
    def from_json_file(cls, path) -> "SyntheticSpec":
        with open(path) as fh:
            payload = json.load(fh)
        known = {k: payload[k] for k in ("n_subjects", "takes", "frames_per_take", "seed", "kind")
                 if k in payload}
        spec = cls(**known)
        spec.validate()
        return spec


class _PressureLaw:
    """Frozen pose -> pressure mapping shared by every dataset."""

    def __init__(self) -> None:
        rng = np.random.default_rng(_GENERATOR_SEED)
        self.mask = canonical_footmask()
        # trajectory harmonics: amplitude and phase per joint coordinate
        self.amps = rng.uniform(0.02, 0.10, size=(N_JOINTS, 2, _HARMONICS))
        self.amps *= _MOBILITY[:, None, None]
        self.phases = rng.uniform(0.0, 2.0 * np.pi, size=(N_JOINTS, 2, _HARMONICS))
        # RBF centers: features of the base trajectory at evenly spaced cycle
        # phases, guaranteeing coverage of the movement
        thetas = np.linspace(0.0, 2.0 * np.pi, _N_CENTERS, endpoint=False)
        self.centers = np.stack([self.features(self.base_pose(t)) for t in thetas])
        gaps = [
            np.linalg.norm(self.centers[i] - self.centers[j])
            for i in range(_N_CENTERS)
            for j in range(_N_CENTERS)
            if i != j
        ]
        self.sigma = float(np.median(gaps))
        # per-center pressure templates: smooth bumps inside each foot
        self.templates = np.zeros((_N_CENTERS, ROWS, COLS, FEET))
        rr, cc = np.meshgrid(np.arange(ROWS), np.arange(COLS), indexing="ij")
        for m in range(_N_CENTERS):
            for foot in range(FEET):
                cells = np.nonzero(self.mask[:, :, foot])
                bumps = np.zeros((ROWS, COLS))
                for _ in range(3):
                    pick = rng.integers(len(cells[0]))
                    r0, c0 = cells[0][pick], cells[1][pick]
                    radius = rng.uniform(3.0, 8.0)
                    amp = rng.uniform(0.4, 1.0)
                    bumps += amp * np.exp(-((rr - r0) ** 2 + (cc - c0) ** 2) / (2 * radius**2))
                self.templates[m, :, :, foot] = bumps / bumps.max()

    def base_pose(self, theta: float) -> np.ndarray:
        wobble = np.zeros((N_JOINTS, 2))
        for h in range(_HARMONICS):
            wobble += self.amps[:, :, h] * np.sin((h + 1) * theta + self.phases[:, :, h])
        return _BASE_SKELETON + wobble

    def features(self, pose_units: np.ndarray) -> np.ndarray:
        return pose_units[list(_DYNAMIC_JOINTS)].reshape(-1)

    def pressure_pattern(self, pose_units: np.ndarray, theta: float) -> np.ndarray:
        f = self.features(pose_units)
        d2 = ((self.centers - f) ** 2).sum(axis=1)
        act = np.exp(-d2 / (2.0 * self.sigma**2))
        act /= act.sum()
        pattern = np.tensordot(act, self.templates, axes=1)
        left_share = 0.5 + 0.4 * np.sin(theta)
        pattern[:, :, 0] *= 2.0 * left_share
        pattern[:, :, 1] *= 2.0 * (1.0 - left_share)
        return pattern


_LAW = None


def _law() -> _PressureLaw:
    global _LAW
    if _LAW is None:
        _LAW = _PressureLaw()
    return _LAW


def synth_generate(spec: SyntheticSpec, out_dir) -> Manifest:
    """Write pose/pressure/mask CSVs and a manifest; deterministic in the seed."""
    spec.validate()
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    law = _law()
    rng = np.random.default_rng(np.random.SeedSequence(spec.seed))

    save_mask_file(out_dir / "footmask.csv", law.mask)
    subjects = {}
    for s in range(spec.n_subjects):
        subject_id = f"s{s + 1:02d}"
        weight = 45.0 + 12.0 * s
        height = 1.52 + 0.06 * s
        scale_px = 170.0 * height  # body units to pixels
        style_phase = rng.uniform(0.0, 2.0 * np.pi)
        style_amp = rng.uniform(0.6, 1.4, size=(N_JOINTS, 1))
        style_posture = rng.normal(0.0, 0.08, size=(N_JOINTS, 2))
        style_posture[MIDHIP] = 0.0
        style_joint_phase = rng.normal(0.0, 0.35, size=(N_JOINTS, 2))

        takes = []
        for t in range(spec.takes):
            camera = rng.uniform(-300.0, 300.0, size=2) + np.array([960.0, 540.0])
            pose_frames = []
            pressure_frames = []
            for frame_id in range(spec.frames_per_take):
                theta = 2.0 * np.pi * frame_id / _PERIOD_FRAMES + style_phase
                wobble = np.zeros((N_JOINTS, 2))
                for h in range(_HARMONICS):
                    wobble += law.amps[:, :, h] * np.sin(
                        (h + 1) * theta + law.phases[:, :, h] + style_joint_phase
                    )
                true_units = _BASE_SKELETON + style_amp * wobble + style_posture

                # pressure comes from the true body configuration
                pattern = law.pressure_pattern(true_units, theta)
                peak_kpa = 140.0 * (weight / 60.0)
                values = pattern * peak_kpa
                noise = rng.uniform(0.0, 3.0, size=values.shape)  # sensor noise floor
                values = np.minimum(values + noise, CLIP_KPA)
                values[~law.mask] = np.nan
                pressure_frames.append(
                    PressureGrid(frame_id=frame_id, values=values, mask=law.mask.copy())
                )

                # the detector sees pixels: scaled, offset, jittered, with dropouts
                joints = np.zeros((N_JOINTS, 3))
                joints[:, :2] = true_units * scale_px + camera
                joints[:, :2] += rng.normal(0.0, 0.4, size=(N_JOINTS, 2))
                joints[:, 2] = rng.uniform(0.55, 1.0, size=N_JOINTS)
                face_dropout = rng.random(4) < 0.6
                for k, joint in enumerate((15, 16, 17, 18)):
                    if face_dropout[k]:
                        joints[joint] = (0.0, 0.0, 0.0)
                pose_frames.append(PoseFrame(frame_id=frame_id, joints=joints))

            pose_name = f"{subject_id}_s1_t{t + 1}_pose.csv"
            pressure_name = f"{subject_id}_s1_t{t + 1}_pressure.csv"
            save_pose_file(out_dir / pose_name, pose_frames)
            save_pressure_file(out_dir / pressure_name, pressure_frames)
            takes.append(Take(take_id=t + 1, pose_file=pose_name,
                              pressure_file=pressure_name, mask_file="footmask.csv", fps=50.0))

        subjects[subject_id] = Subject(
            subject_id=subject_id,
            weight_kg=weight,
            height_m=height,
            sessions=[Session(session_id=1, takes=takes)],
        )

    manifest = Manifest(root=out_dir, subjects=subjects)
    save_manifest(out_dir / "manifest.json", manifest)
    return manifest
