"""Insole pressure grids: parsing, cleaning, and the normalization chain.

Grids are 60 rows x 21 columns x 2 feet in kilopascals (channel 0 = left
foot).  Raw capture marks cells outside the insole as NaN; cleaning turns
NaN into a False mask entry and zero pressure and clips readings above
1000 kPa.  Normalization converts to PSI (x 0.145), multiplies by the
per-cell sensor area (0.039 in^2), divides by subject weight, and finally
divides by one training-split-wide maximum so values land in [0, 1].
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Iterable, Iterator, Sequence, Tuple

import numpy as np

from .errors import ConfigError, DataError

ROWS = 60
COLS = 21
FEET = 2
CELLS = ROWS * COLS * FEET  # 2520
LEFT, RIGHT = 0, 1
CELL_PITCH_MM = 5.08  # insole cells are 0.508 cm square

KPA_TO_PSI = 0.145
SENSOR_AREA_IN2 = 0.039
CLIP_KPA = 1000.0

PRESSURE_CSV_HEADER = ["frame_id"] + [f"p{i}" for i in range(CELLS)]


@dataclass
class PressureGrid:
    """One frame of pressure in kPa with its validity mask."""

    frame_id: int
    values: np.ndarray  # (60, 21, 2) float64
    mask: np.ndarray  # (60, 21, 2) bool

    def __post_init__(self) -> None:
        self.values = np.asarray(self.values, dtype=np.float64)
        self.mask = np.asarray(self.mask, dtype=bool)
        if self.values.shape != (ROWS, COLS, FEET) or self.mask.shape != (ROWS, COLS, FEET):
            raise DataError(
                f"pressure grid needs shape ({ROWS}, {COLS}, {FEET}), got "
                f"{self.values.shape} / {self.mask.shape}"
            )


@dataclass
class NormalizedPressure:
    """Unit-less pressure in [0, 1]; zero outside the mask."""

    frame_id: int
    values: np.ndarray  # (60, 21, 2) float64 in [0, 1]
    mask: np.ndarray


def _flat_to_grid(flat: np.ndarray) -> np.ndarray:
    # column index p = foot*1260 + row*21 + col
    return np.moveaxis(flat.reshape(FEET, ROWS, COLS), 0, -1)


def _grid_to_flat(grid: np.ndarray) -> np.ndarray:
    return np.moveaxis(grid, -1, 0).reshape(-1)


def load_pressure_file(path) -> list[PressureGrid]:
    """Parse raw grids; NaN cells are preserved and reflected in the mask."""
    path = Path(path)
    grids = []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise DataError(f"{path}: empty pressure file")
        if len(header) != CELLS + 1:
            raise DataError(f"{path}: header has {len(header)} columns, expected {CELLS + 1}")
        for row in reader:
            if not row:
                continue
            line = reader.line_num
            if len(row) != CELLS + 1:
                raise DataError(f"{path}:{line}: row has {len(row)} columns, expected {CELLS + 1}")
            try:
                frame_id = int(row[0])
                flat = np.array(row[1:], dtype=np.float64)
            except ValueError as exc:
                raise DataError(f"{path}:{line}: {exc}") from exc
            if np.any(np.isinf(flat)):
                raise DataError(f"{path}:{line}: infinite pressure value")
            finite = np.isfinite(flat)
            if np.any(flat[finite] < 0.0):
                raise DataError(f"{path}:{line}: negative pressure value")
            values = _flat_to_grid(flat)
            grids.append(PressureGrid(frame_id=frame_id, values=values, mask=np.isfinite(values)))
    grids.sort(key=lambda g: g.frame_id)
    return grids


def save_pressure_file(path, grids: Iterable[PressureGrid], nan_outside_mask: bool = True) -> None:
    """Write grids in the flat CSV layout; unmasked cells emit the NaN literal."""
    with open(path, "w", newline="") as fh:
        fh.write(",".join(PRESSURE_CSV_HEADER) + "\n")
        for grid in grids:
            values = grid.values.copy()
            if nan_outside_mask:
                values[~grid.mask] = np.nan
            cells = [str(grid.frame_id)]
            # v != v is the NaN test; tolist() gives plain floats whose repr
            # round-trips exactly
            cells.extend("nan" if v != v else repr(v) for v in _grid_to_flat(values).tolist())
            fh.write(",".join(cells) + "\n")


def clean_and_mask(raw: PressureGrid) -> PressureGrid:
    """NaN -> masked-out zero; finite readings clipped to 1000 kPa."""
    mask = np.isfinite(raw.values)
    values = np.where(mask, raw.values, 0.0)
    values = np.minimum(values, CLIP_KPA)
    return PressureGrid(frame_id=raw.frame_id, values=values, mask=mask)


@dataclass
class PressureNormConfig:
    """Constants of the normalization chain for one subject.

    ``global_max`` is the maximum weight-normalized value over every
    masked cell of the training split; it is fitted once per split and
    shared across subjects.
    """

    subject_weight_kg: float
    global_max: float | None = None
    kpa_to_psi: float = KPA_TO_PSI
    sensor_area_in2: float = SENSOR_AREA_IN2
    clip_kpa: float = CLIP_KPA

    def __post_init__(self) -> None:
        if self.subject_weight_kg <= 0.0:
            raise ConfigError(f"subject weight must be positive, got {self.subject_weight_kg}")
        if self.global_max is not None and self.global_max <= 0.0:
            raise ConfigError(f"global_max must be positive, got {self.global_max}")

    def weight_normalize(self, values_kpa: np.ndarray) -> np.ndarray:
        clipped = np.minimum(values_kpa, self.clip_kpa)
        return clipped * self.kpa_to_psi * self.sensor_area_in2 / self.subject_weight_kg


def fit_global_max(grids_with_weights: Iterable[Tuple[PressureGrid, float]]) -> float:
    """Maximum weight-normalized masked value over a training split."""
    best = 0.0
    seen = False
    for grid, weight_kg in grids_with_weights:
        cfg = PressureNormConfig(subject_weight_kg=weight_kg)
        masked = grid.values[grid.mask]
        if masked.size:
            seen = True
            best = max(best, float(cfg.weight_normalize(masked).max()))
    if not seen:
        raise DataError("cannot fit global_max: no masked cells in the training split")
    if best <= 0.0:
        raise DataError("cannot fit global_max: training split is identically zero")
    return best


def normalize_pressure(grid: PressureGrid, cfg: PressureNormConfig) -> NormalizedPressure:
    """Map a cleaned grid into [0, 1]; values above the training max clamp to 1."""
    if cfg.global_max is None:
        raise ConfigError("normalize_pressure needs a fitted global_max")
    values = cfg.weight_normalize(grid.values) / cfg.global_max
    values = np.clip(values, 0.0, 1.0)
    values[~grid.mask] = 0.0
    return NormalizedPressure(frame_id=grid.frame_id, values=values, mask=grid.mask.copy())


def denormalize_pressure(norm: NormalizedPressure, cfg: PressureNormConfig) -> PressureGrid:
    """Exact algebraic inverse of ``normalize_pressure`` on masked cells."""
    if cfg.global_max is None:
        raise ConfigError("denormalize_pressure needs a fitted global_max")
    values = norm.values * cfg.global_max * cfg.subject_weight_kg / (
        cfg.kpa_to_psi * cfg.sensor_area_in2
    )
    values = np.where(norm.mask, values, 0.0)
    return PressureGrid(frame_id=norm.frame_id, values=values, mask=norm.mask.copy())


def load_mask_file(path) -> np.ndarray:
    """Read a 0/1 mask CSV (same flat layout); returns (60, 21, 2) booleans.

    Multi-row files must agree row to row; the mask of a take is static.
    """
    path = Path(path)
    mask = None
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or len(header) != CELLS + 1:
            raise DataError(f"{path}: malformed mask header")
        for row in reader:
            if not row:
                continue
            if len(row) != CELLS + 1:
                raise DataError(f"{path}:{reader.line_num}: row has {len(row)} columns")
            flat = np.array(row[1:], dtype=np.float64)
            if not np.all((flat == 0.0) | (flat == 1.0)):
                raise DataError(f"{path}:{reader.line_num}: mask values must be 0 or 1")
            current = _flat_to_grid(flat).astype(bool)
            if mask is None:
                mask = current
            elif not np.array_equal(mask, current):
                raise DataError(f"{path}:{reader.line_num}: mask rows disagree")
    if mask is None:
        raise DataError(f"{path}: mask file has no rows")
    return mask


def save_mask_file(path, mask: np.ndarray) -> None:
    mask = np.asarray(mask, dtype=bool)
    if mask.shape != (ROWS, COLS, FEET):
        raise DataError(f"mask needs shape ({ROWS}, {COLS}, {FEET}), got {mask.shape}")
    with open(path, "w", newline="") as fh:
        fh.write(",".join(PRESSURE_CSV_HEADER) + "\n")
        cells = ["0"] + [str(int(v)) for v in _grid_to_flat(mask.astype(np.int64))]
        fh.write(",".join(cells) + "\n")


def canonical_footmask() -> np.ndarray:
    """The foot-shaped binary mask shipped with the package, (60, 21, 2)."""
    source = resources.files("pose2press.data").joinpath("canonical_footmask.csv")
    with resources.as_file(source) as path:
        return load_mask_file(path)
