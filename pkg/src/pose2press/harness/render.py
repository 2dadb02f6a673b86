"""Deterministic heatmap rendering to binary PPM (P6).

Colormap: piecewise-linear blue -> cyan -> yellow -> red over [0, max],
shared across all panels of one image.  Panel pixel intensities and the
per-panel peak values (kPa) are recorded as header comments, so files are
byte-for-byte reproducible and self-describing.
"""

from __future__ import annotations

from pathlib import Path
from typing import Optional

import numpy as np

from ..errors import DataError
from ..pressure import PressureGrid

_STOPS = np.array([
    (0.0, (0, 0, 255)),
    (1 / 3, (0, 255, 255)),
    (2 / 3, (255, 255, 0)),
    (1.0, (255, 0, 0)),
], dtype=object)

_BACKGROUND = np.array([235, 235, 235], dtype=np.uint8)  # outside the footmask
_SEPARATOR = np.array([255, 255, 255], dtype=np.uint8)


def colormap(normalized: np.ndarray) -> np.ndarray:
    """Map [0, 1] values to RGB via the 4-stop linear ramp."""
    v = np.clip(np.asarray(normalized, dtype=np.float64), 0.0, 1.0)
    rgb = np.zeros((*v.shape, 3))
    positions = [float(p) for p, _ in _STOPS]
    colors = np.array([c for _, c in _STOPS], dtype=np.float64)
    for i in range(len(positions) - 1):
        lo, hi = positions[i], positions[i + 1]
        sel = (v >= lo) & (v <= hi) if i == len(positions) - 2 else (v >= lo) & (v < hi)
        t = (v[sel] - lo) / (hi - lo)
        rgb[sel] = colors[i] * (1.0 - t[:, None]) + colors[i + 1] * t[:, None]
    return np.round(rgb).astype(np.uint8)


def _panel_pixels(grid: PressureGrid, scale_kpa: float, cell_px: int) -> np.ndarray:
    """One panel: left foot, a separator column, right foot."""
    feet = []
    for foot in (0, 1):
        values = np.where(grid.mask[:, :, foot], grid.values[:, :, foot], 0.0)
        rgb = colormap(values / scale_kpa if scale_kpa > 0 else values)
        rgb[~grid.mask[:, :, foot]] = _BACKGROUND
        feet.append(rgb)
    gap = np.tile(_SEPARATOR, (feet[0].shape[0], 1, 1))
    panel = np.concatenate([feet[0], gap, feet[1]], axis=1)
    return panel.repeat(cell_px, axis=0).repeat(cell_px, axis=1)


def render_heatmap(out_path, gt: PressureGrid, pred: Optional[PressureGrid] = None,
                   cell_px: int = 6) -> Path:
    """Render one grid, or ground truth / prediction / |difference| panels."""
    if cell_px < 1:
        raise DataError(f"cell_px must be >= 1, got {cell_px}")
    grids = [("ground_truth", gt)]
    if pred is not None:
        if not np.array_equal(gt.mask, pred.mask):
            raise DataError("prediction mask differs from ground truth mask")
        diff = PressureGrid(gt.frame_id, np.abs(gt.values - pred.values) * gt.mask, gt.mask)
        grids.append(("prediction", pred))
        grids.append(("abs_difference", diff))

    scale = max(float(np.where(g.mask, g.values, 0.0).max()) for _, g in grids)
    panels = [_panel_pixels(g, scale, cell_px) for _, g in grids]
    gap = np.tile(_SEPARATOR, (panels[0].shape[0], 3 * cell_px, 1))
    row = panels[0]
    for panel in panels[1:]:
        row = np.concatenate([row, gap, panel], axis=1)

    height, width, _ = row.shape
    header = ["P6"]
    header.append("# colormap: linear blue->cyan->yellow->red over [0, shared_max]")
    header.append(f"# shared_max_kpa {scale!r}")
    for name, g in grids:
        peak = float(np.where(g.mask, g.values, 0.0).max())
        header.append(f"# panel {name} max_kpa {peak!r}")
    header.append(f"{width} {height}")
    header.append("255")
    out_path = Path(out_path)
    with open(out_path, "wb") as fh:
        fh.write(("\n".join(header) + "\n").encode("ascii"))
        fh.write(row.tobytes())
    return out_path
