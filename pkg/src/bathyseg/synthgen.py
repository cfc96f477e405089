"""Synthetic training data: ship extraction, compositing, and terrain.

Real wrecks are scarce, so the training set is augmented by pasting extracted
ship relief onto other terrain at a depth-consistent elevation: the composited
ship's mean depth is drawn around 91% of the terrain's mean depth, i.e. the
wreck stands slightly proud of the seafloor. Labels come along for free.

A diamond-square fractal generator provides terrain for desk-scale runs where
no survey rasters are at hand, and synthetic_ship() builds procedural hull
patches for the same purpose.
"""

from __future__ import annotations

import math
import os
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import ndimage

from .errors import (
    EmptyLabel,
    InsufficientInputs,
    MalformedHeader,
    NoValidPlacement,
    ShipOnNodata,
)
from .grid_io import GeoGrid, RasterFormat, read_grid, write_grid

SPLIT_FRACTIONS = (0.65, 0.05, 0.30)
SPLIT_NAMES = ("train", "val", "test")

MANIFEST_HEADER = "# sample\tlabel\tkind\tresolution_m_per_px\tmean_depth_m\tsplit"
KINDS = ("real-wreck", "synthetic-wreck", "terrain")


@dataclass(frozen=True)
class ShipPatch:
    """Ship relief relative to its own mean depth, plus the footprint mask."""

    relief: np.ndarray  # h x w float64 meters, zero mean over the footprint
    footprint: np.ndarray  # h x w bool
    pixel_size: float
    source_id: str = ""

    def __post_init__(self):
        relief = np.asarray(self.relief, dtype=np.float64)
        footprint = np.asarray(self.footprint, dtype=bool)
        if relief.shape != footprint.shape or relief.ndim != 2:
            raise ValueError("relief and footprint must be matching 2-D arrays")
        if not footprint.any():
            raise ValueError("footprint must be non-empty")
        if abs(relief[footprint].mean()) > 1e-6:
            raise ValueError("relief must have zero mean over the footprint")
        relief.setflags(write=False)
        footprint.setflags(write=False)
        object.__setattr__(self, "relief", relief)
        object.__setattr__(self, "footprint", footprint)


@dataclass(frozen=True)
class SynthConfig:
    depth_ratio_mean: float = 0.91
    depth_ratio_sigma: float = 0.02
    seed: int = 0

    def __post_init__(self):
        if not 0.0 < self.depth_ratio_mean < 1.0:
            raise ValueError("depth_ratio_mean must be in (0, 1)")
        if self.depth_ratio_sigma < 0:
            raise ValueError("depth_ratio_sigma must be >= 0")


@dataclass
class ManifestEntry:
    sample_path: str
    label_path: str
    kind: str
    resolution: float
    mean_depth: float
    split: str
    source_id: str = ""  # in-memory only; not part of the manifest file


@dataclass
class DatasetManifest:
    entries: list[ManifestEntry]
    root: str = "."
    split_fractions: tuple[float, float, float] = SPLIT_FRACTIONS

    def for_split(self, split: str) -> list[ManifestEntry]:
        return [e for e in self.entries if e.split == split]

    def save(self, path: str | Path):
        lines = [MANIFEST_HEADER]
        for e in self.entries:
            lines.append(
                f"{e.sample_path}\t{e.label_path}\t{e.kind}\t{e.resolution!r}\t"
                f"{e.mean_depth!r}\t{e.split}"
            )
        Path(path).write_text("\n".join(lines) + "\n")

    @classmethod
    def load(cls, path: str | Path) -> "DatasetManifest":
        path = Path(path)
        entries = []
        for line in path.read_text().splitlines():
            if not line.strip() or line.startswith("#"):
                continue
            parts = line.split("\t")
            if len(parts) != 6:
                raise MalformedHeader(f"manifest line needs 6 fields: {line!r}")
            sample, label, kind, res, depth, split = parts
            if kind not in KINDS or split not in SPLIT_NAMES:
                raise MalformedHeader(f"bad kind/split in manifest line {line!r}")
            entries.append(
                ManifestEntry(sample, label, kind, float(res), float(depth), split)
            )
        return cls(entries=entries, root=str(path.parent))

    def resolve(self, rel: str) -> Path:
        return Path(self.root) / rel


# ---------------------------------------------------------------------------
# ship extraction and compositing
# ---------------------------------------------------------------------------


def extract_ship(grid: GeoGrid, label: np.ndarray, source_id: str = "") -> ShipPatch:
    """Cut the labeled ship out of a grid as zero-mean relief.

    The mean depth is taken over the labeled pixels only, then subtracted, so
    the patch carries shape but no absolute depth.
    """
    label = np.asarray(label)
    if label.shape != grid.depth.shape:
        raise EmptyLabel(f"label shape {label.shape} does not match grid")
    ship = label > 0
    if not ship.any():
        raise EmptyLabel("label has no ship pixels")
    if not grid.valid[ship].all():
        raise ShipOnNodata("ship label overlaps nodata cells")
    rows = np.nonzero(ship.any(axis=1))[0]
    cols = np.nonzero(ship.any(axis=0))[0]
    box = (slice(rows[0], rows[-1] + 1), slice(cols[0], cols[-1] + 1))
    depth = grid.depth[box].astype(np.float64)
    footprint = ship[box]
    relief = depth - depth[footprint].mean()
    relief[~footprint] = 0.0
    # re-center once more so float rounding cannot break the zero-mean contract
    relief[footprint] -= relief[footprint].mean()
    return ShipPatch(relief=relief, footprint=footprint,
                     pixel_size=grid.pixel_size, source_id=source_id)


def _rotated_patch(ship: ShipPatch, theta_deg: float, scale: float):
    relief = np.asarray(ship.relief)
    footprint = ship.footprint.astype(np.float32)
    if abs(scale - 1.0) > 1e-9:
        relief = ndimage.zoom(relief, scale, order=1)
        footprint = ndimage.zoom(footprint, scale, order=0)
    relief = ndimage.rotate(relief, theta_deg, reshape=True, order=1, cval=0.0)
    footprint = ndimage.rotate(footprint, theta_deg, reshape=True, order=0, cval=0.0)
    return relief, footprint > 0.5


def composite(
    ship: ShipPatch,
    terrain: GeoGrid,
    cfg: SynthConfig,
    rng: np.random.Generator,
) -> tuple[GeoGrid, np.ndarray]:
    """Paste a ship onto terrain at a random pose and a depth-consistent level.

    Returns the composited grid and its pixel-wise label. Pixels outside the
    rotated footprint are bit-identical to the terrain input.
    """
    if not terrain.valid.any():
        raise NoValidPlacement("terrain has no valid pixels")
    theta = float(rng.uniform(0.0, 360.0))
    scale = ship.pixel_size / terrain.pixel_size
    relief, footprint = _rotated_patch(ship, theta, scale)
    if not footprint.any():
        raise NoValidPlacement("footprint vanished after resampling")
    h, w = footprint.shape
    if h > terrain.rows or w > terrain.cols:
        raise NoValidPlacement(f"{h}x{w} footprint cannot fit {terrain.rows}x{terrain.cols} terrain")

    placed = None
    for _ in range(100):
        r0 = int(rng.integers(0, terrain.rows - h + 1))
        c0 = int(rng.integers(0, terrain.cols - w + 1))
        if terrain.valid[r0 : r0 + h, c0 : c0 + w][footprint].all():
            placed = (r0, c0)
            break
    if placed is None:
        raise NoValidPlacement("no position kept the footprint on valid terrain in 100 tries")
    r0, c0 = placed

    terrain_mean = float(terrain.depth[terrain.valid].astype(np.float64).mean())
    target = float(
        rng.normal(cfg.depth_ratio_mean * terrain_mean, cfg.depth_ratio_sigma * abs(terrain_mean))
    )

    depth = terrain.depth.copy()
    window = depth[r0 : r0 + h, c0 : c0 + w]
    window[footprint] = (target + relief[footprint]).astype(np.float32)
    label = np.zeros(depth.shape, dtype=np.uint8)
    label[r0 : r0 + h, c0 : c0 + w][footprint] = 1
    out = GeoGrid(
        depth=depth,
        valid=terrain.valid.copy(),
        origin_easting=terrain.origin_easting,
        origin_northing=terrain.origin_northing,
        pixel_size=terrain.pixel_size,
        crs_id=terrain.crs_id,
    )
    return out, label


# ---------------------------------------------------------------------------
# procedural terrain and hulls
# ---------------------------------------------------------------------------


def generate_terrain(
    rows: int,
    cols: int,
    pixel_size: float,
    base_depth: float,
    roughness: float,
    seed: int,
    origin: tuple[float, float] | None = None,
    crs_id: int = 0,
) -> GeoGrid:
    """Diamond-square fractal seafloor, RMS deviation equal to roughness."""
    if roughness < 0:
        raise ValueError("roughness must be >= 0")
    if roughness == 0:
        surface = np.full((rows, cols), base_depth, dtype=np.float64)
    else:
        k = max(1, math.ceil(math.log2(max(rows, cols, 2) - 1)))
        size = 2**k + 1
        rng = np.random.default_rng(seed)
        g = np.zeros((size, size))
        g[0, 0], g[0, -1], g[-1, 0], g[-1, -1] = rng.normal(0.0, 1.0, 4)
        step = size - 1
        amp = 1.0
        while step > 1:
            half = step // 2
            # diamond: cell centers from the four surrounding corners
            corners = (
                g[:-1:step, :-1:step] + g[:-1:step, step::step]
                + g[step::step, :-1:step] + g[step::step, step::step]
            )
            centers = corners / 4.0 + rng.normal(0.0, amp, corners.shape)
            g[half::step, half::step] = centers
            # square: edge midpoints from their available neighbors
            for r in range(0, size, half):
                offset = half if (r // half) % 2 == 0 else 0
                for c in range(offset, size, step):
                    total, n = 0.0, 0
                    if r - half >= 0:
                        total += g[r - half, c]; n += 1
                    if r + half < size:
                        total += g[r + half, c]; n += 1
                    if c - half >= 0:
                        total += g[r, c - half]; n += 1
                    if c + half < size:
                        total += g[r, c + half]; n += 1
                    g[r, c] = total / n + rng.normal(0.0, amp)
            step = half
            amp *= 0.5
        surface = g[:rows, :cols]
        std = surface.std()
        if std > 0:
            surface = (surface - surface.mean()) * (roughness / std) + base_depth
        else:
            surface = np.full((rows, cols), base_depth, dtype=np.float64)
    if origin is None:
        origin = (0.0, rows * pixel_size)
    return GeoGrid(
        depth=surface.astype(np.float32),
        valid=np.ones((rows, cols), dtype=bool),
        origin_easting=origin[0],
        origin_northing=origin[1],
        pixel_size=pixel_size,
        crs_id=crs_id,
    )


def synthetic_ship(
    length_m: float,
    beam_m: float,
    height_m: float,
    pixel_size: float,
    seed: int,
    source_id: str | None = None,
) -> ShipPatch:
    """Procedural hull patch for desk-scale datasets: an elliptical footprint
    with a smooth proud relief and a little deterministic superstructure."""
    rng = np.random.default_rng(seed)
    h = max(3, int(round(beam_m / pixel_size)))
    w = max(3, int(round(length_m / pixel_size)))
    r, c = np.mgrid[0:h, 0:w]
    ry = (r - (h - 1) / 2.0) / (h / 2.0)
    rx = (c - (w - 1) / 2.0) / (w / 2.0)
    d2 = rx**2 + ry**2
    footprint = d2 <= 1.0
    hull = np.sqrt(np.clip(1.0 - d2, 0.0, 1.0))
    bumps = ndimage.gaussian_filter(rng.normal(0.0, 1.0, (h, w)), sigma=1.0)
    relief = -(hull + 0.2 * bumps) * height_m  # proud = shallower = negative
    relief[~footprint] = 0.0
    relief[footprint] -= relief[footprint].mean()
    return ShipPatch(
        relief=relief,
        footprint=footprint,
        pixel_size=pixel_size,
        source_id=source_id if source_id is not None else f"synthetic-hull-{seed}",
    )


# ---------------------------------------------------------------------------
# dataset builds
# ---------------------------------------------------------------------------


def _largest_remainder(total: int, fractions) -> list[int]:
    raw = [f * total for f in fractions]
    base = [int(math.floor(v)) for v in raw]
    short = total - sum(base)
    order = sorted(range(len(raw)), key=lambda i: (-(raw[i] - base[i]), i))
    for i in order[:short]:
        base[i] += 1
    return base


def assign_splits(
    source_ids: list[str],
    seed: int,
    fractions=SPLIT_FRACTIONS,
) -> list[str]:
    """Split assignment with per-source atomicity.

    All entries sharing a source_id land in the same split, so multiple
    surveys of one wreck can never leak between train and test. Quotas follow
    largest-remainder rounding over entry counts.
    """
    groups: dict[str, list[int]] = {}
    for idx, sid in enumerate(source_ids):
        groups.setdefault(sid, []).append(idx)
    keys = sorted(groups.keys())
    rng = np.random.default_rng(seed)
    rng.shuffle(keys)
    quotas = _largest_remainder(len(source_ids), fractions)
    assigned: list[list[str]] = [[], [], []]
    remaining = list(quotas)
    for key in keys:
        target = max(range(3), key=lambda i: (remaining[i], -i))
        assigned[target].append(key)
        remaining[target] -= len(groups[key])

    # multi-entry groups can overshoot a quota and starve another split; give
    # every split with a nonzero target at least one group when possible
    for i in range(3):
        if quotas[i] > 0 and not assigned[i] and len(keys) >= 3:
            donor = max(
                (j for j in range(3) if len(assigned[j]) >= 2),
                key=lambda j: quotas[j] - remaining[j],
                default=None,
            )
            if donor is not None:
                move = min(assigned[donor], key=lambda k: (len(groups[k]), k))
                assigned[donor].remove(move)
                assigned[i].append(move)

    out = [""] * len(source_ids)
    for i, bucket in enumerate(assigned):
        for key in bucket:
            for idx in groups[key]:
                out[idx] = SPLIT_NAMES[i]
    return out


def build_dataset(
    ships: list[ShipPatch],
    terrains: list[GeoGrid],
    counts: tuple[int, int, int],
    cfg: SynthConfig,
    out_dir: str | Path,
    real_pairs: list[tuple[GeoGrid, np.ndarray, str]] | None = None,
) -> DatasetManifest:
    """Write a dataset of (sample, label) grid pairs plus its manifest.

    counts is (real, synthetic, terrain-only). Real pairs are passed through
    as-is; synthetic samples composite a random ship onto a random terrain;
    terrain-only samples get an all-zero label. Every sample derives its own
    rng from cfg.seed XOR the entry index, so builds are reproducible and
    parallelizable.
    """
    n_real, n_synth, n_terrain = counts
    if min(counts) < 0:
        raise ValueError("counts must be >= 0")
    real_pairs = real_pairs or []
    if n_real > 0 and not real_pairs:
        raise InsufficientInputs("real count > 0 but no real pairs provided")
    if n_synth > 0 and (not ships or not terrains):
        raise InsufficientInputs("synthetic count > 0 needs ships and terrains")
    if n_terrain > 0 and not terrains:
        raise InsufficientInputs("terrain count > 0 needs terrains")

    out_dir = Path(out_dir)
    (out_dir / "samples").mkdir(parents=True, exist_ok=True)
    (out_dir / "labels").mkdir(parents=True, exist_ok=True)

    plan: list[tuple[str, int]] = (
        [("real-wreck", i) for i in range(n_real)]
        + [("synthetic-wreck", i) for i in range(n_synth)]
        + [("terrain", i) for i in range(n_terrain)]
    )
    entries: list[ManifestEntry] = []
    for idx, (kind, k) in enumerate(plan):
        rng = np.random.default_rng(cfg.seed ^ idx)
        if kind == "real-wreck":
            grid, label, source_id = real_pairs[k % len(real_pairs)]
            label = np.asarray(label, dtype=np.uint8)
        elif kind == "synthetic-wreck":
            ship = ships[int(rng.integers(len(ships)))]
            terrain = terrains[int(rng.integers(len(terrains)))]
            grid, label = composite(ship, terrain, cfg, rng)
            source_id = ship.source_id
        else:
            terrain = terrains[int(rng.integers(len(terrains)))]
            grid = terrain
            label = np.zeros(grid.depth.shape, dtype=np.uint8)
            source_id = f"terrain-{idx:05d}"

        sample_rel = f"samples/{idx:05d}.bgrd"
        label_rel = f"labels/{idx:05d}.bgrd"
        (out_dir / sample_rel).write_bytes(write_grid(grid, RasterFormat.INTERNAL_BINARY))
        label_grid = GeoGrid(
            depth=label.astype(np.float32),
            valid=grid.valid.copy(),
            origin_easting=grid.origin_easting,
            origin_northing=grid.origin_northing,
            pixel_size=grid.pixel_size,
            crs_id=grid.crs_id,
        )
        (out_dir / label_rel).write_bytes(write_grid(label_grid, RasterFormat.INTERNAL_BINARY))
        entries.append(
            ManifestEntry(
                sample_path=sample_rel,
                label_path=label_rel,
                kind=kind,
                resolution=grid.pixel_size,
                mean_depth=float(grid.depth[grid.valid].mean()) if grid.valid.any() else 0.0,
                split="",
                source_id=source_id,
            )
        )

    for entry, split in zip(entries, assign_splits([e.source_id for e in entries], cfg.seed)):
        entry.split = split

    manifest = DatasetManifest(entries=entries, root=str(out_dir))
    manifest.save(out_dir / "manifest.tsv")
    return manifest


def load_pair(manifest: DatasetManifest, entry: ManifestEntry) -> tuple[GeoGrid, np.ndarray]:
    """Read one (sample grid, label mask) pair referenced by a manifest."""
    grid = read_grid(manifest.resolve(entry.sample_path).read_bytes(), RasterFormat.INTERNAL_BINARY)
    label_grid = read_grid(manifest.resolve(entry.label_path).read_bytes(), RasterFormat.INTERNAL_BINARY)
    if label_grid.depth.shape != grid.depth.shape:
        raise MalformedHeader(f"label dims do not match sample for {entry.sample_path}")
    return grid, (label_grid.depth > 0.5).astype(np.uint8)
