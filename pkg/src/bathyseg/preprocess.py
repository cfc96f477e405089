"""Chunking, normalization, and hillshading of bathymetry grids.

Survey rasters are cut into fixed geographic tiles (200 x 200 m by default)
whatever the native resolution, so the network always sees the same physical
extent. Each tile is min-max normalized per chunk, which makes the model
invariant to absolute depth.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import AllNodata, ResolutionTooCoarse
from .grid_io import GeoGrid

DEFAULT_CHUNK_EXTENT_M = 200.0


@dataclass(frozen=True)
class ChunkerConfig:
    """Tiling parameters. stride defaults to chunk_extent (non-overlapping)."""

    chunk_extent: float = DEFAULT_CHUNK_EXTENT_M
    stride: float | None = None
    edge_policy: str = "reflect"  # "reflect" | "nodata"

    def __post_init__(self):
        if self.stride is None:
            object.__setattr__(self, "stride", self.chunk_extent)
        if not 0 < self.stride <= self.chunk_extent:
            raise ValueError("need 0 < stride <= chunk_extent")
        if self.edge_policy not in ("reflect", "nodata"):
            raise ValueError(f"unknown edge_policy {self.edge_policy!r}")


@dataclass(frozen=True)
class Chunk:
    """One tile cut from a parent grid, with placement provenance."""

    parent_id: str
    row_off: int
    col_off: int
    data: np.ndarray  # h x w float32 depths
    valid: np.ndarray  # h x w bool
    pad_right: int
    pad_bottom: int
    pixel_size: float


@dataclass(frozen=True)
class NormalizedChunk:
    """Chunk scaled to [0, 1] with the restoration parameters kept."""

    parent_id: str
    row_off: int
    col_off: int
    data: np.ndarray  # h x w float32 in [0, 1]
    valid: np.ndarray
    depth_min: float
    depth_max: float
    pad_right: int
    pad_bottom: int
    pixel_size: float
    fill_converged: bool | None = None  # set by inpaint()


def chunk_pixel_dim(pixel_size: float, chunk_extent: float = DEFAULT_CHUNK_EXTENT_M) -> int:
    return int(round(chunk_extent / pixel_size))


def chunk_grid(grid: GeoGrid, cfg: ChunkerConfig = ChunkerConfig(), parent_id: str = "") -> list[Chunk]:
    """Cut a grid into chunk_extent-sized tiles in row-major order.

    Edge tiles are padded on the right/bottom per cfg.edge_policy and the pad
    amounts recorded so merging can crop them back off. Every parent pixel is
    covered by at least one tile.
    """
    if grid.pixel_size > cfg.chunk_extent:
        raise ResolutionTooCoarse(
            f"pixel size {grid.pixel_size} m exceeds chunk extent {cfg.chunk_extent} m"
        )
    n = chunk_pixel_dim(grid.pixel_size, cfg.chunk_extent)
    if n < 4:
        raise ResolutionTooCoarse(f"chunks would be {n} px; need >= 4")
    stride_px = max(1, int(round(cfg.stride / grid.pixel_size)))

    row_starts = list(range(0, grid.rows, stride_px))
    col_starts = list(range(0, grid.cols, stride_px))
    pad_b = max(0, row_starts[-1] + n - grid.rows)
    pad_r = max(0, col_starts[-1] + n - grid.cols)

    if cfg.edge_policy == "reflect":
        depth = np.pad(grid.depth, ((0, pad_b), (0, pad_r)), mode="reflect")
        valid = np.pad(grid.valid, ((0, pad_b), (0, pad_r)), mode="reflect")
    else:
        depth = np.pad(grid.depth, ((0, pad_b), (0, pad_r)))
        valid = np.pad(grid.valid, ((0, pad_b), (0, pad_r)), constant_values=False)

    chunks = []
    for r0 in row_starts:
        for c0 in col_starts:
            chunks.append(
                Chunk(
                    parent_id=parent_id,
                    row_off=r0,
                    col_off=c0,
                    data=np.ascontiguousarray(depth[r0 : r0 + n, c0 : c0 + n]),
                    valid=np.ascontiguousarray(valid[r0 : r0 + n, c0 : c0 + n]),
                    pad_right=max(0, c0 + n - grid.cols),
                    pad_bottom=max(0, r0 + n - grid.rows),
                    pixel_size=grid.pixel_size,
                )
            )
    return chunks


def normalize_chunk(chunk: Chunk) -> NormalizedChunk:
    """Min-max scale valid depths to [0, 1]; constant chunks map to 0.5.

    Nodata pixels carry 0.0 and stay flagged invalid. Denormalizing with
    (depth_max - depth_min) reproduces the original valid pixels.
    """
    if not chunk.valid.any():
        raise AllNodata("chunk has no valid pixels")
    dvals = chunk.data[chunk.valid].astype(np.float64)
    mn, mx = float(dvals.min()), float(dvals.max())
    if mx > mn:
        norm = (chunk.data.astype(np.float64) - mn) / (mx - mn)
    else:
        norm = np.full(chunk.data.shape, 0.5, dtype=np.float64)
    out = np.where(chunk.valid, norm, 0.0).astype(np.float32)
    return NormalizedChunk(
        parent_id=chunk.parent_id,
        row_off=chunk.row_off,
        col_off=chunk.col_off,
        data=out,
        valid=chunk.valid,
        depth_min=mn,
        depth_max=mx,
        pad_right=chunk.pad_right,
        pad_bottom=chunk.pad_bottom,
        pixel_size=chunk.pixel_size,
    )


def denormalize(nc: NormalizedChunk) -> np.ndarray:
    """Restore meters from a normalized chunk (float32)."""
    return (nc.data.astype(np.float64) * (nc.depth_max - nc.depth_min) + nc.depth_min).astype(
        np.float32
    )


def hillshade(
    depth: np.ndarray,
    pixel_size: float,
    azimuth: float = 315.0,
    altitude: float = 45.0,
    z_factor: float = 1.0,
) -> np.ndarray:
    """Horn-method hillshade of a fully valid depth array, in [0, 255].

    Depth is positive-down, so it is negated into elevation before the slope
    computation. Border pixels use replicated edges. Result is float64;
    callers quantize as needed.
    """
    if pixel_size <= 0:
        raise ValueError("pixel_size must be positive")
    z = np.pad(-np.asarray(depth, dtype=np.float64), 1, mode="edge")
    a, b, c = z[:-2, :-2], z[:-2, 1:-1], z[:-2, 2:]
    d, f = z[1:-1, :-2], z[1:-1, 2:]
    g, h, i = z[2:, :-2], z[2:, 1:-1], z[2:, 2:]
    dzdx = ((c + 2 * f + i) - (a + 2 * d + g)) / (8 * pixel_size)
    dzdy = ((g + 2 * h + i) - (a + 2 * b + c)) / (8 * pixel_size)  # positive southward

    zenith = math.radians(90.0 - altitude)
    az_math = math.radians((360.0 - azimuth + 90.0) % 360.0)
    slope = np.arctan(z_factor * np.hypot(dzdx, dzdy))
    aspect = np.arctan2(dzdy, -dzdx)
    shade = 255.0 * (
        math.cos(zenith) * np.cos(slope)
        + math.sin(zenith) * np.sin(slope) * np.cos(az_math - aspect)
    )
    return np.clip(shade, 0.0, 255.0)


def model_input(nc: NormalizedChunk, use_hillshade: bool) -> np.ndarray:
    """Stack network input channels (C x H x W float32) from an inpainted chunk.

    Channel 0 is the normalized depth; the optional channel 1 is the hillshade
    of the denormalized surface scaled to [0, 1], so slopes stay physical.
    """
    if not nc.valid.all():
        raise AllNodata("model input requires a fully valid (inpainted) chunk")
    channels = [nc.data]
    if use_hillshade:
        shade = hillshade(denormalize(nc), nc.pixel_size) / 255.0
        channels.append(shade.astype(np.float32))
    return np.stack(channels, axis=0)
