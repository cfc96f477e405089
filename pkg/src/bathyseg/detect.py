"""Whole-layer inference: chunked CNN forward passes and bounded-memory merge.

Chunks are processed independently (normalize, inpaint, optional hillshade,
forward, softmax) and stitched back into one continuous probability layer.
Merging carries per-pixel running sums and counts so overlapping tiles
average deterministically, and when more than batch_limit tiles are in
flight they are reduced in batches and the partial layers merged recursively,
keeping peak memory bounded no matter the survey size.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Iterable, Iterator

import numpy as np

from .errors import AllNodata, PlacementOutOfBounds, WeightsChannelMismatch
from .grid_io import GeoGrid, crop_grid
from .inpaint import InpaintConfig, inpaint
from .preprocess import ChunkerConfig, chunk_grid, model_input, normalize_chunk
from .segnet.layers import softmax
from .segnet.model import ModelWeights, forward


@dataclass(frozen=True, eq=False)
class ProbabilityMap:
    """Per-pixel ship probability aligned to a grid extent."""

    values: np.ndarray  # rows x cols float32 in [0, 1]
    valid: np.ndarray
    origin_easting: float
    origin_northing: float
    pixel_size: float
    crs_id: int = 0

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float32)
        valid = np.asarray(self.valid, dtype=bool)
        if values.shape != valid.shape or values.ndim != 2:
            raise ValueError("values and valid must be matching 2-D arrays")
        if values.size and (values.min() < 0.0 or values.max() > 1.0):
            raise ValueError("probabilities must lie in [0, 1]")
        # canonical form mirrors GeoGrid: nodata cells carry exactly 0.0
        if not np.all(valid):
            values = values.copy()
            values[~valid] = 0.0
        values.setflags(write=False)
        valid.setflags(write=False)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "valid", valid)

    @property
    def rows(self) -> int:
        return self.values.shape[0]

    @property
    def cols(self) -> int:
        return self.values.shape[1]

    def to_grid(self) -> GeoGrid:
        """Repackage as a GeoGrid so probability layers reuse the raster formats."""
        return GeoGrid(
            depth=self.values,
            valid=self.valid,
            origin_easting=self.origin_easting,
            origin_northing=self.origin_northing,
            pixel_size=self.pixel_size,
            crs_id=self.crs_id,
        )

    @classmethod
    def from_grid(cls, grid: GeoGrid) -> "ProbabilityMap":
        return cls(
            values=np.clip(grid.depth, 0.0, 1.0),
            valid=grid.valid,
            origin_easting=grid.origin_easting,
            origin_northing=grid.origin_northing,
            pixel_size=grid.pixel_size,
            crs_id=grid.crs_id,
        )

    def __eq__(self, other) -> bool:
        if not isinstance(other, ProbabilityMap):
            return NotImplemented
        return (
            self.values.shape == other.values.shape
            and self.values.tobytes() == other.values.tobytes()
            and np.array_equal(self.valid, other.valid)
            and (self.origin_easting, self.origin_northing, self.pixel_size, self.crs_id)
            == (other.origin_easting, other.origin_northing, other.pixel_size, other.crs_id)
        )


@dataclass(frozen=True)
class MergePlan:
    """Target extent and batching bound for stitching probability tiles."""

    rows: int
    cols: int
    batch_limit: int = 500
    origin_easting: float = 0.0
    origin_northing: float = 0.0
    pixel_size: float = 1.0
    crs_id: int = 0

    def __post_init__(self):
        if self.batch_limit < 2:
            raise ValueError("batch_limit must be >= 2")
        if self.rows < 1 or self.cols < 1:
            raise ValueError("target extent must be at least 1 x 1")


class TileCounter:
    """Counts live (materialized) tiles so tests can assert the memory bound."""

    def __init__(self):
        self.live = 0
        self.peak = 0

    def acquire(self, n: int = 1):
        self.live += n
        self.peak = max(self.peak, self.live)

    def release(self, n: int = 1):
        self.live -= n


class _Acc:
    """Partial layer: per-pixel float64 sums and int32 counts over a bbox."""

    __slots__ = ("row0", "col0", "sums", "counts")

    def __init__(self, row0: int, col0: int, rows: int, cols: int):
        self.row0 = row0
        self.col0 = col0
        self.sums = np.zeros((rows, cols), dtype=np.float64)
        self.counts = np.zeros((rows, cols), dtype=np.int32)

    def grow_to(self, row0: int, col0: int, row1: int, col1: int) -> "_Acc":
        if (
            row0 >= self.row0
            and col0 >= self.col0
            and row1 <= self.row0 + self.sums.shape[0]
            and col1 <= self.col0 + self.sums.shape[1]
        ):
            return self
        nr0 = min(self.row0, row0)
        nc0 = min(self.col0, col0)
        nr1 = max(self.row0 + self.sums.shape[0], row1)
        nc1 = max(self.col0 + self.sums.shape[1], col1)
        out = _Acc(nr0, nc0, nr1 - nr0, nc1 - nc0)
        r, c = self.row0 - nr0, self.col0 - nc0
        out.sums[r : r + self.sums.shape[0], c : c + self.sums.shape[1]] = self.sums
        out.counts[r : r + self.counts.shape[0], c : c + self.counts.shape[1]] = self.counts
        return out

    def add_tile(self, row0: int, col0: int, values: np.ndarray) -> "_Acc":
        acc = self.grow_to(row0, col0, row0 + values.shape[0], col0 + values.shape[1])
        r, c = row0 - acc.row0, col0 - acc.col0
        acc.sums[r : r + values.shape[0], c : c + values.shape[1]] += values
        acc.counts[r : r + values.shape[0], c : c + values.shape[1]] += 1
        return acc

    def add_acc(self, other: "_Acc") -> "_Acc":
        acc = self.grow_to(
            other.row0,
            other.col0,
            other.row0 + other.sums.shape[0],
            other.col0 + other.sums.shape[1],
        )
        r, c = other.row0 - acc.row0, other.col0 - acc.col0
        acc.sums[r : r + other.sums.shape[0], c : c + other.sums.shape[1]] += other.sums
        acc.counts[r : r + other.counts.shape[0], c : c + other.counts.shape[1]] += other.counts
        return acc


def merge_chunks(
    pieces: Iterable[tuple[int, int, np.ndarray]],
    plan: MergePlan,
    counter: TileCounter | None = None,
) -> ProbabilityMap:
    """Stitch placed probability tiles into one layer.

    Overlaps average (running sum and count, one division at the end), so a
    recursive batched merge is bit-comparable to a direct one. Pixels covered
    by no tile are invalid. Pieces are consumed one at a time; at most
    batch_limit tiles go into each partial layer, and partial layers are
    reduced the same way until one remains.
    """
    counter = counter if counter is not None else TileCounter()

    def acquired(stream: Iterable) -> Iterator:
        for item in stream:
            counter.acquire()
            yield item

    def merge_level(stream: Iterator, limit: int) -> list[_Acc]:
        partials: list[_Acc] = []
        acc: _Acc | None = None
        n_in_acc = 0
        for item in stream:
            if n_in_acc == limit:
                partials.append(acc)
                acc = None
                n_in_acc = 0
            if isinstance(item, _Acc):
                if acc is None:
                    counter.acquire()
                    acc = item
                    counter.release()  # consumed item folds into the new acc
                else:
                    acc = acc.add_acc(item)
                    counter.release()
            else:
                row0, col0, values = item
                values = np.asarray(values, dtype=np.float64)
                if (
                    row0 < 0
                    or col0 < 0
                    or row0 + values.shape[0] > plan.rows
                    or col0 + values.shape[1] > plan.cols
                ):
                    raise PlacementOutOfBounds(
                        f"tile at ({row0}, {col0}) of {values.shape} exceeds "
                        f"{plan.rows}x{plan.cols} target"
                    )
                if acc is None:
                    counter.acquire()
                    acc = _Acc(row0, col0, values.shape[0], values.shape[1])
                acc = acc.add_tile(row0, col0, values)
                counter.release()
            n_in_acc += 1
        if acc is not None:
            partials.append(acc)
        return partials

    level: Iterator = acquired(pieces)
    while True:
        partials = merge_level(level, plan.batch_limit)
        if len(partials) <= 1:
            final = partials[0] if partials else None
            break
        level = iter(partials)  # partials are already counted live

    values = np.zeros((plan.rows, plan.cols), dtype=np.float32)
    covered = np.zeros((plan.rows, plan.cols), dtype=bool)
    if final is not None:
        r, c = final.row0, final.col0
        h, w = final.sums.shape
        cnt = final.counts
        with np.errstate(invalid="ignore", divide="ignore"):
            avg = np.where(cnt > 0, final.sums / np.maximum(cnt, 1), 0.0)
        values[r : r + h, c : c + w] = np.clip(avg, 0.0, 1.0).astype(np.float32)
        covered[r : r + h, c : c + w] = cnt > 0
        counter.release()
    return ProbabilityMap(
        values=values,
        valid=covered,
        origin_easting=plan.origin_easting,
        origin_northing=plan.origin_northing,
        pixel_size=plan.pixel_size,
        crs_id=plan.crs_id,
    )


# ---------------------------------------------------------------------------
# CNN backend
# ---------------------------------------------------------------------------


def infer_cnn(
    grid: GeoGrid,
    weights: ModelWeights,
    use_hillshade: bool = False,
    extent: tuple[int, int, int, int] | None = None,
    chunker: ChunkerConfig | None = None,
    inpaint_cfg: InpaintConfig | None = None,
    batch_size: int = 8,
    batch_limit: int = 500,
    progress: Callable[[int, int], None] | None = None,
) -> ProbabilityMap:
    """Run the segmentation net over a grid (or a pixel-rect extent of it).

    Pipeline per chunk: normalize, inpaint, optional hillshade channel,
    forward, softmax ship channel; padding is cropped off and tiles merged
    with overlap averaging. Fully nodata chunks skip the network.
    """
    expected = 2 if use_hillshade else 1
    if weights.config.in_channels != expected:
        raise WeightsChannelMismatch(
            f"weights take {weights.config.in_channels} channels but the input "
            f"stack has {expected}"
        )
    sub = grid
    if extent is not None:
        row0, col0, nrows, ncols = extent
        sub = crop_grid(grid, row0, col0, nrows, ncols)
    if not sub.valid.any():
        raise AllNodata("extent contains no valid pixels")

    chunks = chunk_grid(sub, chunker or ChunkerConfig())
    inp = inpaint_cfg or InpaintConfig()
    total = len(chunks)

    def tiles() -> Iterator[tuple[int, int, np.ndarray]]:
        done = 0
        for start in range(0, total, batch_size):
            batch = chunks[start : start + batch_size]
            stacked = []
            for ch in batch:
                if ch.valid.any():
                    nc = inpaint(normalize_chunk(ch), inp)
                    stacked.append(model_input(nc, use_hillshade))
                else:
                    stacked.append(None)
            live = [s for s in stacked if s is not None]
            if live:
                probs = softmax(forward(weights, np.stack(live)))[:, 1]
            k = 0
            for ch, s in zip(batch, stacked):
                n = ch.data.shape[0]
                if s is None:
                    tile = np.zeros((n, n), dtype=np.float32)
                else:
                    tile = probs[k].astype(np.float32)
                    k += 1
                h = n - ch.pad_bottom
                w = n - ch.pad_right
                done += 1
                if progress is not None:
                    progress(done, total)
                yield ch.row_off, ch.col_off, tile[:h, :w]

    merged = merge_chunks(
        tiles(),
        MergePlan(
            rows=sub.rows,
            cols=sub.cols,
            batch_limit=batch_limit,
            origin_easting=sub.origin_easting,
            origin_northing=sub.origin_northing,
            pixel_size=sub.pixel_size,
            crs_id=sub.crs_id,
        ),
    )
    values = np.where(sub.valid, merged.values, 0.0).astype(np.float32)
    return ProbabilityMap(
        values=values,
        valid=sub.valid.copy(),
        origin_easting=sub.origin_easting,
        origin_northing=sub.origin_northing,
        pixel_size=sub.pixel_size,
        crs_id=sub.crs_id,
    )
