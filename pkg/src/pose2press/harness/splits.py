"""Leave-one-subject-out split construction.

Each split holds out every take of one subject for testing; the last take
of every remaining subject becomes validation and the rest train.
"""

from __future__ import annotations

from dataclasses import dataclass

from ..errors import DataError
from .manifest import Manifest, TakeRef


@dataclass
class SplitSpec:
    test_subject: str
    train_takes: list  # list[TakeRef]
    val_takes: list
    test_takes: list

    @property
    def split_id(self) -> str:
        return f"loso-{self.test_subject}"


def make_loso_splits(manifest: Manifest) -> list:
    subjects = manifest.subject_ids()
    if len(subjects) < 2:
        raise DataError(f"leave-one-subject-out needs at least 2 subjects, got {len(subjects)}")
    splits = []
    for held_out in subjects:
        train, val = [], []
        for other in subjects:
            if other == held_out:
                continue
            takes = [ref for ref, _ in manifest.subject(other).ordered_takes()]
            if len(takes) < 2:
                raise DataError(
                    f"subject {other!r} has a single take and cannot donate a "
                    f"validation take while training"
                )
            train.extend(takes[:-1])
            val.append(takes[-1])
        test = [ref for ref, _ in manifest.subject(held_out).ordered_takes()]
        if not test:
            raise DataError(f"held-out subject {held_out!r} has no takes")
        splits.append(SplitSpec(test_subject=held_out, train_takes=train, val_takes=val,
                                test_takes=test))
    return splits


def split_for_subject(manifest: Manifest, subject_id: str) -> SplitSpec:
    for split in make_loso_splits(manifest):
        if split.test_subject == subject_id:
            return split
    raise DataError(f"no split tests subject {subject_id!r}")
