"""Analytic baseline: find wrecks as depressions of the inverted seafloor.

A wreck stands proud of the terrain, so on the inverted surface it becomes a
pit. Depths here are already stored positive-down, i.e. the stored raster IS
the inverted elevation, and wrecks appear directly as local minima of the
depth array. Priority-flood filling raises every cell to its spill level;
cells whose filled level exceeds the surface belong to a depression.

Regions are then filtered by fill depth and by cell count (the count
threshold is defined at 0.5 m/px and rescaled with resolution so it stays an
area criterion), dilated by a small buffer, and reported with the contour
levels they span.
"""

from __future__ import annotations

import heapq
from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .errors import AllNodata
from .detect import ProbabilityMap
from .grid_io import GeoGrid

_EIGHT = np.ones((3, 3), dtype=bool)
_NEIGHBORS = [(-1, -1), (-1, 0), (-1, 1), (0, -1), (0, 1), (1, -1), (1, 0), (1, 1)]

REFERENCE_PIXEL_SIZE = 0.5  # min_depress counts cells at this resolution


@dataclass(frozen=True)
class DepressionParams:
    min_depress: int = 100
    buffer: int = 1
    interval: float = 0.2
    min_depth: float = 0.2
    base: float | None = None  # None: raster minimum depth rounded to one decimal

    def __post_init__(self):
        if not self.interval > 0:
            raise ValueError("interval must be positive")
        if self.min_depth < 0:
            raise ValueError("min_depth must be >= 0")


def priority_flood_fill(surface: np.ndarray, valid: np.ndarray) -> np.ndarray:
    """Raise every cell to its spill elevation (8-connected drainage).

    Water drains off the array border and through nodata cells, so valid
    cells adjacent to either are the seeds. Returns the filled surface
    (float64); filled - surface is the depression depth.
    """
    surface = np.asarray(surface, dtype=np.float64)
    valid = np.asarray(valid, dtype=bool)
    rows, cols = surface.shape
    filled = surface.copy()
    visited = ~valid  # nodata never blocks drainage

    border = np.zeros_like(valid)
    border[0, :] = border[-1, :] = border[:, 0] = border[:, -1] = True
    near_nodata = ndimage.binary_dilation(~valid, structure=_EIGHT) if (~valid).any() else border & False
    seeds = valid & (border | near_nodata)

    heap: list[tuple[float, int, int, int]] = []
    order = 0
    for r, c in zip(*np.nonzero(seeds)):
        heapq.heappush(heap, (surface[r, c], order, int(r), int(c)))
        visited[r, c] = True
        order += 1
    while heap:
        level, _, r, c = heapq.heappop(heap)
        for dr, dc in _NEIGHBORS:
            nr, nc = r + dr, c + dc
            if 0 <= nr < rows and 0 <= nc < cols and not visited[nr, nc]:
                visited[nr, nc] = True
                filled[nr, nc] = max(surface[nr, nc], level)
                heapq.heappush(heap, (filled[nr, nc], order, nr, nc))
                order += 1
    return filled


def depression_regions(grid: GeoGrid, params: DepressionParams = DepressionParams()):
    """Detected depression regions with their stats and contour levels.

    Returns (kept mask before buffering, list of region dicts, fill depth).
    """
    if not grid.valid.any():
        raise AllNodata("grid has no valid pixels")
    surface = grid.depth.astype(np.float64)
    filled = priority_flood_fill(surface, grid.valid)
    fill_depth = np.where(grid.valid, filled - surface, 0.0)

    cells = (fill_depth > 1e-9) & grid.valid
    labels, count = ndimage.label(cells, structure=_EIGHT)
    min_cells = params.min_depress * (REFERENCE_PIXEL_SIZE / grid.pixel_size) ** 2
    base = (
        params.base
        if params.base is not None
        else round(float(surface[grid.valid].min()), 1)
    )

    kept = np.zeros_like(cells)
    regions = []
    for region_id in range(1, count + 1):
        mask = labels == region_id
        n = int(mask.sum())
        max_fill = float(fill_depth[mask].max())
        if max_fill < params.min_depth or n < min_cells:
            continue
        smin = float(surface[mask].min())
        smax = float(filled[mask].max())
        # 1e-6-of-an-interval slack absorbs float wobble at exact multiples
        k0 = int(np.ceil((smin - base) / params.interval - 1e-6))
        k1 = int(np.floor((smax - base) / params.interval + 1e-6))
        levels = [base + k * params.interval for k in range(k0, k1 + 1)]
        kept |= mask
        regions.append(
            {
                "id": len(regions) + 1,
                "cells": n,
                "max_fill_depth": max_fill,
                "min_surface": smin,
                "spill_level": smax,
                "contour_levels": levels,
            }
        )
    return kept, regions, fill_depth


def infer_depression(
    grid: GeoGrid, params: DepressionParams = DepressionParams()
) -> ProbabilityMap:
    """Binary probability map from the depression baseline."""
    kept, _, _ = depression_regions(grid, params)
    if params.buffer > 0 and kept.any():
        kept = ndimage.binary_dilation(kept, structure=_EIGHT, iterations=params.buffer)
        kept &= grid.valid
    return ProbabilityMap(
        values=kept.astype(np.float32),
        valid=grid.valid.copy(),
        origin_easting=grid.origin_easting,
        origin_northing=grid.origin_northing,
        pixel_size=grid.pixel_size,
        crs_id=grid.crs_id,
    )
