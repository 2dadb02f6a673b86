"""Evaluation metrics: MAE in kPa, per-foot center of pressure, paired t-test.

Grid geometry: cells are 5.08 mm square; cell (row 0, col 0) has its
center at (0, 0) mm with x along columns and y along rows.  All reported
positions are millimeters in that frame.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import DataError, ShapeError
from .pressure import CELL_PITCH_MM, LEFT, RIGHT, PressureGrid


@dataclass
class CoPPoint:
    """Pressure-weighted mean location of one foot, in millimeters."""

    x_mm: float
    y_mm: float
    defined: bool

    def as_array(self) -> np.ndarray:
        return np.array([self.x_mm, self.y_mm])


@dataclass
class ErrorSummary:
    mean: float
    std: float  # population convention
    median: float
    max: float
    min: float
    count: int

    def to_json(self) -> dict:
        return {
            "mean": self.mean,
            "std": self.std,
            "median": self.median,
            "max": self.max,
            "min": self.min,
            "count": self.count,
        }


@dataclass
class TTestResult:
    t_stat: float
    p_value: float
    df: int
    n: int

    def to_json(self) -> dict:
        return {"t_stat": self.t_stat, "p_value": self.p_value, "df": self.df, "n": self.n}


def mean_absolute_error_kpa(gt: PressureGrid, pred: PressureGrid) -> float:
    """Mean |difference| in kPa over the masked cells of both feet."""
    if not np.array_equal(gt.mask, pred.mask):
        raise ShapeError("MAE needs identical masks on both grids")
    if not gt.mask.any():
        raise DataError("MAE undefined on an empty mask")
    return float(np.abs(gt.values[gt.mask] - pred.values[gt.mask]).mean())


def center_of_pressure(grid: PressureGrid, foot: int) -> CoPPoint:
    """Weighted mean cell position of one foot (0 = left, 1 = right)."""
    if foot not in (LEFT, RIGHT):
        raise DataError(f"foot must be 0 (left) or 1 (right), got {foot}")
    values = np.where(grid.mask[:, :, foot], grid.values[:, :, foot], 0.0)
    total = values.sum()
    if total <= 0.0:
        return CoPPoint(x_mm=float("nan"), y_mm=float("nan"), defined=False)
    rows, cols = np.nonzero(grid.mask[:, :, foot])
    weights = values[rows, cols]
    x_mm = CELL_PITCH_MM * float((weights * cols).sum() / total)
    y_mm = CELL_PITCH_MM * float((weights * rows).sum() / total)
    return CoPPoint(x_mm=x_mm, y_mm=y_mm, defined=True)


def cop_error_l2(gt: CoPPoint, pred: CoPPoint) -> float:
    """Euclidean distance in mm; both points must be defined."""
    if not (gt.defined and pred.defined):
        raise DataError("CoP error needs both points defined")
    return float(math.hypot(gt.x_mm - pred.x_mm, gt.y_mm - pred.y_mm))


def summarize_errors(values: Sequence[float]) -> ErrorSummary:
    arr = np.asarray(list(values), dtype=np.float64)
    if arr.size == 0:
        raise DataError("cannot summarize an empty error series")
    return ErrorSummary(
        mean=float(arr.mean()),
        std=float(arr.std()),
        median=float(np.median(arr)),
        max=float(arr.max()),
        min=float(arr.min()),
        count=int(arr.size),
    )


def paired_t_test(errors_a: Sequence[float], errors_b: Sequence[float]) -> TTestResult:
    """Two-tailed paired t-test on per-frame error series.

    Uses the sample standard deviation of the differences with n-1
    degrees of freedom; identical series (zero-variance differences) are
    a degenerate sample, reported as an error rather than a p-value.
    """
    a = np.asarray(list(errors_a), dtype=np.float64)
    b = np.asarray(list(errors_b), dtype=np.float64)
    if a.shape != b.shape:
        raise DataError(f"paired series must have equal lengths, got {a.size} and {b.size}")
    if a.size < 2:
        raise DataError("paired t-test needs at least 2 pairs")
    diff = a - b
    sd = diff.std(ddof=1)
    if sd == 0.0:
        raise DataError("degenerate sample: differences have zero variance")
    n = diff.size
    t = float(diff.mean() / (sd / math.sqrt(n)))
    df = n - 1
    p = student_t_two_tailed_p(t, df)
    return TTestResult(t_stat=t, p_value=p, df=df, n=n)


def student_t_two_tailed_p(t: float, df: int) -> float:
    """P(|T| >= |t|) for Student's t with ``df`` degrees of freedom.

    Equals the regularized incomplete beta I_x(df/2, 1/2) at
    x = df / (df + t^2).
    """
    if df < 1:
        raise DataError(f"degrees of freedom must be >= 1, got {df}")
    x = df / (df + t * t)
    return regularized_incomplete_beta(df / 2.0, 0.5, x)


def regularized_incomplete_beta(a: float, b: float, x: float) -> float:
    """I_x(a, b) via the standard continued fraction (Lentz's method)."""
    if not 0.0 <= x <= 1.0:
        raise DataError(f"incomplete beta needs x in [0, 1], got {x}")
    if x == 0.0:
        return 0.0
    if x == 1.0:
        return 1.0
    ln_front = (
        math.lgamma(a + b) - math.lgamma(a) - math.lgamma(b)
        + a * math.log(x) + b * math.log1p(-x)
    )
    front = math.exp(ln_front)
    # the continued fraction converges fast for x < (a+1)/(a+b+2); use the
    # symmetry I_x(a,b) = 1 - I_{1-x}(b,a) otherwise
    if x < (a + 1.0) / (a + b + 2.0):
        return front * _beta_continued_fraction(a, b, x) / a
    return 1.0 - front * _beta_continued_fraction(b, a, 1.0 - x) / b


def _beta_continued_fraction(a: float, b: float, x: float, max_iter: int = 300,
                             tol: float = 1e-14) -> float:
    tiny = 1e-300
    qab = a + b
    qap = a + 1.0
    qam = a - 1.0
    c = 1.0
    d = 1.0 - qab * x / qap
    if abs(d) < tiny:
        d = tiny
    d = 1.0 / d
    h = d
    for m in range(1, max_iter + 1):
        m2 = 2 * m
        num = m * (b - m) * x / ((qam + m2) * (a + m2))
        d = 1.0 + num * d
        if abs(d) < tiny:
            d = tiny
        c = 1.0 + num / c
        if abs(c) < tiny:
            c = tiny
        d = 1.0 / d
        h *= d * c
        num = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        d = 1.0 + num * d
        if abs(d) < tiny:
            d = tiny
        c = 1.0 + num / c
        if abs(c) < tiny:
            c = tiny
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < tol:
            return h
    raise DataError("incomplete beta continued fraction failed to converge")
