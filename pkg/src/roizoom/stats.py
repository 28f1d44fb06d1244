"""ROI distribution analytics over annotated records: a spatial coverage
heatmap on a unit grid and summary statistics of box area fractions."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .dataset import AnnotatedRecord
from .geometry import Raster, write_pnm

DEFAULT_GRID = 64


@dataclass(frozen=True)
class RoiHeatmap:
    """Coverage counts over a G x G grid; `grid` is max-normalized to
    [0, 1], `counts` keeps the raw integers. Indexed [row][col] = [y][x]."""

    grid: np.ndarray
    counts: np.ndarray
    size: int


def aggregate_heatmap(records: list[AnnotatedRecord], grid_size: int = DEFAULT_GRID) -> RoiHeatmap:
    """Rasterize every record's ROI onto the unit grid.

    A cell counts toward a box when its center lies inside the half-open
    box extent [w0, w1) x [h0, h1). Counts are normalized by their maximum.
    """
    if grid_size < 1:
        raise ValueError(f"grid size must be >= 1, got {grid_size}")
    if not records:
        raise ValueError("need at least one record")
    centers = (np.arange(grid_size) + 0.5) / grid_size
    counts = np.zeros((grid_size, grid_size), dtype=np.int64)
    for rec in records:
        inside_x = (centers >= rec.roi.w0) & (centers < rec.roi.w1)
        inside_y = (centers >= rec.roi.h0) & (centers < rec.roi.h1)
        counts += inside_y[:, None] & inside_x[None, :]
    peak = counts.max()
    grid = counts / peak if peak > 0 else counts.astype(np.float64)
    return RoiHeatmap(grid=grid, counts=counts, size=grid_size)


def area_stats(records: list[AnnotatedRecord]) -> dict[str, float]:
    """Mean, median, and population stddev of ROI area fractions."""
    if not records:
        raise ValueError("need at least one record")
    areas = np.array([rec.roi.area() for rec in records], dtype=np.float64)
    return {
        "mean": float(areas.mean()),
        "median": float(np.median(areas)),
        "stddev": float(areas.std()),
    }


def heatmap_to_pgm(heatmap: RoiHeatmap, path: str | Path) -> None:
    """Write the normalized heatmap as an 8-bit PGM (255 = peak)."""
    samples = np.floor(255.0 * heatmap.grid + 0.5).astype(np.uint8)
    write_pnm(Raster.from_array(samples), path)


def heatmap_to_csv(heatmap: RoiHeatmap, path: str | Path) -> None:
    """Write raw counts as CSV, one grid row per line."""
    lines = [",".join(str(int(v)) for v in row) for row in heatmap.counts]
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")
