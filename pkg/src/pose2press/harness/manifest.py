"""Dataset manifest: subjects, sessions, takes, and their data files."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator

from ..errors import DataError


@dataclass(frozen=True)
class TakeRef:
    subject: str
    session: int
    take: int

    @property
    def label(self) -> str:
        return f"{self.subject}/s{self.session}/t{self.take}"


@dataclass
class Take:
    take_id: int
    pose_file: str
    pressure_file: str
    mask_file: str
    fps: float = 50.0


@dataclass
class Session:
    session_id: int
    takes: list


@dataclass
class Subject:
    subject_id: str
    weight_kg: float
    height_m: float
    sessions: list

    def ordered_takes(self) -> list:
        """(TakeRef, Take) pairs in declaration order; the last one donates validation."""
        out = []
        for session in self.sessions:
            for take in session.takes:
                out.append((TakeRef(self.subject_id, session.session_id, take.take_id), take))
        return out


@dataclass
class Manifest:
    root: Path
    subjects: dict

    def subject_ids(self) -> list:
        return list(self.subjects)

    def subject(self, subject_id: str) -> Subject:
        if subject_id not in self.subjects:
            raise DataError(f"unknown subject {subject_id!r}; manifest has {self.subject_ids()}")
        return self.subjects[subject_id]

    def take(self, ref: TakeRef) -> Take:
        for candidate_ref, take in self.subject(ref.subject).ordered_takes():
            if candidate_ref == ref:
                return take
        raise DataError(f"manifest has no take {ref.label}")

    def resolve(self, relative: str) -> Path:
        return self.root / relative

    def all_refs(self) -> Iterator[TakeRef]:
        for subject in self.subjects.values():
            for ref, _ in subject.ordered_takes():
                yield ref


def load_manifest(path) -> Manifest:
    path = Path(path)
    with open(path) as fh:
        payload = json.load(fh)
    if "subjects" not in payload:
        raise DataError(f"{path}: manifest missing 'subjects'")
    subjects = {}
    for subject_id, sub in payload["subjects"].items():
        try:
            sessions = [
                Session(
                    session_id=int(sess["id"]),
                    takes=[
                        Take(
                            take_id=int(take["id"]),
                            pose_file=take["pose_file"],
                            pressure_file=take["pressure_file"],
                            mask_file=take["mask_file"],
                            fps=float(take.get("fps", 50.0)),
                        )
                        for take in sess["takes"]
                    ],
                )
                for sess in sub["sessions"]
            ]
            subjects[subject_id] = Subject(
                subject_id=subject_id,
                weight_kg=float(sub["weight_kg"]),
                height_m=float(sub["height_m"]),
                sessions=sessions,
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise DataError(f"{path}: malformed subject {subject_id!r}: {exc}") from exc
        if subjects[subject_id].weight_kg <= 0:
            raise DataError(f"{path}: subject {subject_id!r} needs a positive weight")
    return Manifest(root=path.parent, subjects=subjects)


def save_manifest(path, manifest: Manifest) -> None:
    payload = {
        "subjects": {
            sid: {
                "weight_kg": sub.weight_kg,
                "height_m": sub.height_m,
                "sessions": [
                    {
                        "id": sess.session_id,
                        "takes": [
                            {
                                "id": take.take_id,
                                "pose_file": take.pose_file,
                                "pressure_file": take.pressure_file,
                                "mask_file": take.mask_file,
                                "fps": take.fps,
                            }
                            for take in sess.takes
                        ],
                    }
                    for sess in sub.sessions
                ],
            }
            for sid, sub in manifest.subjects.items()
        }
    }
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2)
        fh.write("\n")
