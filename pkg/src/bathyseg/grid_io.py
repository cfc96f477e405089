"""Bathymetric raster parsing, serialization, and preview rendering.

The GeoGrid is the currency of the whole pipeline: a regular grid of depths
in meters (positive down) in a projected CRS, row 0 northernmost, with a
validity mask for nodata cells. Grids are immutable after construction and
canonical: nodata cells always carry depth 0.0, so serialized bytes are a
content address.

Supported formats:
  * InternalBinary (".bgrd") - the pipeline's own bit-exact container.
  * EsriAscii (".asc")       - standard 6-line-header ASCII grid.
  * XyzPoints (".xyz")       - scattered x/y/z points, binned to a grid.
  * GeoTiffSubset (".tif")   - classic little/big-endian TIFF, single band,
                               32-bit float, uncompressed, strip or tile
                               layout, pixel-scale + tiepoint georeferencing.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass
from enum import Enum

import numpy as np

from . import pngio
from .errors import (
    DegenerateRange,
    EmptyInput,
    InconsistentDimensions,
    MalformedHeader,
    UnsupportedTiffFeature,
    UnwritableFormat,
)

BGRD_MAGIC = b"BGRD"
BGRD_VERSION = 1
_BGRD_HEADER = struct.Struct("<4sHIIdddI")

_DEFAULT_NODATA = -9999.0


class RasterFormat(Enum):
    INTERNAL_BINARY = "bgrd"
    ESRI_ASCII = "asc"
    XYZ_POINTS = "xyz"
    GEOTIFF_SUBSET = "tif"


WRITABLE_FORMATS = frozenset({RasterFormat.INTERNAL_BINARY, RasterFormat.ESRI_ASCII})

_EXTENSION_FORMATS = {
    "bgrd": RasterFormat.INTERNAL_BINARY,
    "asc": RasterFormat.ESRI_ASCII,
    "xyz": RasterFormat.XYZ_POINTS,
    "tif": RasterFormat.GEOTIFF_SUBSET,
    "tiff": RasterFormat.GEOTIFF_SUBSET,
}


def format_for_path(path: str) -> RasterFormat:
    """Map a filename extension to a RasterFormat."""
    ext = str(path).rsplit(".", 1)[-1].lower()
    try:
        return _EXTENSION_FORMATS[ext]
    except KeyError:
        raise UnwritableFormat(f"no raster format for extension {ext!r}") from None


@dataclass(frozen=True, eq=False)
class GeoGrid:
    """Georeferenced depth raster with nodata mask.

    depth is float32 meters positive-down; valid marks cells with data.
    (origin_easting, origin_northing) is the world coordinate of the
    top-left corner of pixel (0, 0); pixels are square.
    """

    depth: np.ndarray
    valid: np.ndarray
    origin_easting: float
    origin_northing: float
    pixel_size: float
    crs_id: int = 0

    def __post_init__(self):
        depth = np.asarray(self.depth, dtype=np.float32)
        valid = np.asarray(self.valid, dtype=bool)
        if depth.ndim != 2 or depth.shape[0] < 1 or depth.shape[1] < 1:
            raise ValueError("depth must be a 2-D array with rows, cols >= 1")
        if valid.shape != depth.shape:
            raise ValueError("valid mask shape must match depth")
        if not self.pixel_size > 0:
            raise ValueError("pixel_size must be positive")
        if not np.all(np.isfinite(depth[valid])):
            raise ValueError("depth must be finite wherever valid")
        # canonical form: nodata cells carry exactly 0.0
        if not np.all(valid):
            depth = depth.copy()
            depth[~valid] = 0.0
        depth.setflags(write=False)
        valid.setflags(write=False)
        object.__setattr__(self, "depth", depth)
        object.__setattr__(self, "valid", valid)
        object.__setattr__(self, "origin_easting", float(self.origin_easting))
        object.__setattr__(self, "origin_northing", float(self.origin_northing))
        object.__setattr__(self, "pixel_size", float(self.pixel_size))
        object.__setattr__(self, "crs_id", int(self.crs_id))

    @property
    def rows(self) -> int:
        return self.depth.shape[0]

    @property
    def cols(self) -> int:
        return self.depth.shape[1]

    @property
    def bounds(self) -> tuple[float, float, float, float]:
        """(min_easting, min_northing, max_easting, max_northing)."""
        return (
            self.origin_easting,
            self.origin_northing - self.rows * self.pixel_size,
            self.origin_easting + self.cols * self.pixel_size,
            self.origin_northing,
        )

    def __eq__(self, other) -> bool:
        if not isinstance(other, GeoGrid):
            return NotImplemented
        return (
            self.depth.shape == other.depth.shape
            and self.depth.tobytes() == other.depth.tobytes()
            and np.array_equal(self.valid, other.valid)
            and self.origin_easting == other.origin_easting
            and self.origin_northing == other.origin_northing
            and self.pixel_size == other.pixel_size
            and self.crs_id == other.crs_id
        )


def crop_grid(grid: GeoGrid, row0: int, col0: int, nrows: int, ncols: int) -> GeoGrid:
    """Extract a pixel window as a new grid with shifted origin."""
    if row0 < 0 or col0 < 0 or row0 + nrows > grid.rows or col0 + ncols > grid.cols:
        raise ValueError("crop window outside grid")
    return GeoGrid(
        depth=grid.depth[row0 : row0 + nrows, col0 : col0 + ncols].copy(),
        valid=grid.valid[row0 : row0 + nrows, col0 : col0 + ncols].copy(),
        origin_easting=grid.origin_easting + col0 * grid.pixel_size,
        origin_northing=grid.origin_northing - row0 * grid.pixel_size,
        pixel_size=grid.pixel_size,
        crs_id=grid.crs_id,
    )


def grid_metadata(grid: GeoGrid) -> dict:
    """Summary metadata used by the CLI and the HTTP service."""
    depths = grid.depth[grid.valid]
    return {
        "rows": grid.rows,
        "cols": grid.cols,
        "pixel_size": grid.pixel_size,
        "crs_id": grid.crs_id,
        "bounds": list(grid.bounds),
        "depth_min": float(depths.min()) if depths.size else None,
        "depth_max": float(depths.max()) if depths.size else None,
        "valid_fraction": float(grid.valid.mean()),
    }


# ---------------------------------------------------------------------------
# dispatch
# ---------------------------------------------------------------------------


def read_grid(data: bytes, fmt: RasterFormat) -> GeoGrid:
    """Parse raster bytes in the stated format.

    Raises a typed error (MalformedHeader, InconsistentDimensions,
    UnsupportedTiffFeature, EmptyInput) on any malformed input; never returns
    a partial grid.
    """
    if len(data) == 0:
        raise EmptyInput("empty raster input")
    if fmt is RasterFormat.INTERNAL_BINARY:
        return _read_bgrd(data)
    if fmt is RasterFormat.ESRI_ASCII:
        return _read_esri_ascii(data)
    if fmt is RasterFormat.XYZ_POINTS:
        return _read_xyz(data)
    if fmt is RasterFormat.GEOTIFF_SUBSET:
        return _read_geotiff(data)
    raise UnwritableFormat(f"unknown format {fmt!r}")


def write_grid(grid: GeoGrid, fmt: RasterFormat) -> bytes:
    """Serialize a grid. Only InternalBinary and EsriAscii are writable."""
    if fmt is RasterFormat.INTERNAL_BINARY:
        return _write_bgrd(grid)
    if fmt is RasterFormat.ESRI_ASCII:
        return _write_esri_ascii(grid)
    raise UnwritableFormat(f"{fmt.name} has no writer")


def _checked_grid(**kwargs) -> GeoGrid:
    # readers funnel construction through here so invariant violations in
    # decoded data surface as typed parse errors, not ValueError
    try:
        return GeoGrid(**kwargs)
    except ValueError as exc:
        raise MalformedHeader(str(exc)) from None


# ---------------------------------------------------------------------------
# InternalBinary (.bgrd)
# ---------------------------------------------------------------------------


def _read_bgrd(data: bytes) -> GeoGrid:
    if len(data) < _BGRD_HEADER.size:
        raise MalformedHeader("truncated header")
    magic, version, rows, cols, east, north, pixel_size, crs_id = _BGRD_HEADER.unpack_from(data)
    if magic != BGRD_MAGIC:
        raise MalformedHeader(f"bad magic {magic!r}")
    if version != BGRD_VERSION:
        raise MalformedHeader(f"unsupported version {version}")
    if rows < 1 or cols < 1:
        raise MalformedHeader("rows and cols must be >= 1")
    n = rows * cols
    expected = _BGRD_HEADER.size + 4 * n + n
    if len(data) != expected:
        raise InconsistentDimensions(
            f"expected {expected} bytes for {rows}x{cols}, got {len(data)}"
        )
    depth = np.frombuffer(data, dtype="<f4", count=n, offset=_BGRD_HEADER.size)
    validity = np.frombuffer(data, dtype=np.uint8, count=n, offset=_BGRD_HEADER.size + 4 * n)
    if not np.all((validity == 0) | (validity == 1)):
        raise MalformedHeader("validity bytes must be 0 or 1")
    return _checked_grid(
        depth=depth.reshape(rows, cols),
        valid=(validity == 1).reshape(rows, cols),
        origin_easting=east,
        origin_northing=north,
        pixel_size=pixel_size,
        crs_id=crs_id,
    )


def _write_bgrd(grid: GeoGrid) -> bytes:
    header = _BGRD_HEADER.pack(
        BGRD_MAGIC,
        BGRD_VERSION,
        grid.rows,
        grid.cols,
        grid.origin_easting,
        grid.origin_northing,
        grid.pixel_size,
        grid.crs_id,
    )
    depth = np.ascontiguousarray(grid.depth, dtype="<f4")
    validity = grid.valid.astype(np.uint8)
    return header + depth.tobytes() + validity.tobytes()


# ---------------------------------------------------------------------------
# EsriAscii (.asc)
# ---------------------------------------------------------------------------

_ASC_KEYS = ("ncols", "nrows", "xllcorner", "yllcorner", "cellsize")


def _read_esri_ascii(data: bytes) -> GeoGrid:
    try:
        text = data.decode("ascii")
    except UnicodeDecodeError:
        raise MalformedHeader("not ASCII text") from None
    lines = text.splitlines()
    header: dict[str, float] = {}
    body_start = 0
    for i, line in enumerate(lines):
        parts = line.split()
        if len(parts) == 2 and parts[0].lower() in _ASC_KEYS + ("nodata_value",):
            try:
                header[parts[0].lower()] = float(parts[1])
            except ValueError:
                raise MalformedHeader(f"bad header line {line!r}") from None
        else:
            body_start = i
            break
    else:
        body_start = len(lines)
    missing = [k for k in _ASC_KEYS if k not in header]
    if missing:
        raise MalformedHeader(f"missing header keys {missing}")
    rows, cols = int(header["nrows"]), int(header["ncols"])
    cellsize = header["cellsize"]
    if rows < 1 or cols < 1 or not cellsize > 0:
        raise MalformedHeader("nrows/ncols must be >= 1 and cellsize > 0")
    nodata = header.get("nodata_value", _DEFAULT_NODATA)
    try:
        values = np.array(" ".join(lines[body_start:]).split(), dtype=np.float64)
    except ValueError as exc:
        raise MalformedHeader(f"bad data token: {exc}") from None
    if values.size != rows * cols:
        raise InconsistentDimensions(
            f"expected {rows * cols} values, got {values.size}"
        )
    values = values.reshape(rows, cols)
    valid = (values != nodata) & np.isfinite(values)
    return _checked_grid(
        depth=values.astype(np.float32),
        valid=valid,
        origin_easting=header["xllcorner"],
        origin_northing=header["yllcorner"] + rows * cellsize,
        pixel_size=cellsize,
        crs_id=0,
    )


def _write_esri_ascii(grid: GeoGrid) -> bytes:
    # pick a nodata sentinel that cannot collide with a printed valid value
    nodata = _DEFAULT_NODATA
    depths = grid.depth[grid.valid]
    while depths.size and np.any(np.abs(depths - nodata) < 1e-3):
        nodata -= 10000.0
    yll = grid.origin_northing - grid.rows * grid.pixel_size
    out = [
        f"ncols {grid.cols}",
        f"nrows {grid.rows}",
        f"xllcorner {grid.origin_easting!r}",
        f"yllcorner {yll!r}",
        f"cellsize {grid.pixel_size!r}",
        f"NODATA_value {nodata:.1f}",
    ]
    body = np.where(grid.valid, grid.depth.astype(np.float64), nodata)
    for r in range(grid.rows):
        out.append(" ".join(f"{v:.4f}" for v in body[r]))
    return ("\n".join(out) + "\n").encode("ascii")


# ---------------------------------------------------------------------------
# XyzPoints (.xyz)
# ---------------------------------------------------------------------------


def _read_xyz(data: bytes) -> GeoGrid:
    try:
        text = data.decode("ascii")
    except UnicodeDecodeError:
        raise MalformedHeader("not ASCII text") from None
    xs, ys, zs = [], [], []
    for line in text.splitlines():
        line = line.replace(",", " ").strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split()
        if len(parts) < 3:
            raise MalformedHeader(f"xyz line needs 3 columns: {line!r}")
        try:
            xs.append(float(parts[0]))
            ys.append(float(parts[1]))
            zs.append(float(parts[2]))
        except ValueError:
            raise MalformedHeader(f"bad xyz token in {line!r}") from None
    if len(xs) == 0:
        raise EmptyInput("no xyz points")
    if len(xs) < 3:
        raise MalformedHeader("xyz needs at least 3 points")
    x = np.array(xs)
    y = np.array(ys)
    z = np.array(zs)
    if not (np.all(np.isfinite(x)) and np.all(np.isfinite(y)) and np.all(np.isfinite(z))):
        raise MalformedHeader("xyz coordinates must be finite")

    # pixel size: minimum positive spacing observed along either axis
    spacings = []
    for coords in (x, y):
        uniq = np.unique(coords)
        if uniq.size > 1:
            diffs = np.diff(uniq)
            spacings.append(diffs[diffs > 0].min())
    if not spacings:
        raise MalformedHeader("xyz points have no positive coordinate spacing")
    px = float(min(spacings))

    cols = int(round((x.max() - x.min()) / px)) + 1
    rows = int(round((y.max() - y.min()) / px)) + 1
    if rows * cols > 100_000_000:
        raise InconsistentDimensions(
            f"binned grid {rows}x{cols} implausibly large for {x.size} points"
        )
    col = np.rint((x - x.min()) / px).astype(np.int64)
    row = np.rint((y.max() - y) / px).astype(np.int64)
    flat = row * cols + col
    sums = np.zeros(rows * cols, dtype=np.float64)
    counts = np.zeros(rows * cols, dtype=np.int64)
    np.add.at(sums, flat, z)
    np.add.at(counts, flat, 1)
    valid = counts > 0
    depth = np.zeros(rows * cols, dtype=np.float64)
    depth[valid] = sums[valid] / counts[valid]
    # points are cell centers; origin is the outer corner of pixel (0, 0)
    return _checked_grid(
        depth=depth.reshape(rows, cols).astype(np.float32),
        valid=valid.reshape(rows, cols),
        origin_easting=float(x.min()) - px / 2,
        origin_northing=float(y.max()) + px / 2,
        pixel_size=px,
        crs_id=0,
    )


# ---------------------------------------------------------------------------
# GeoTiffSubset (.tif)
# ---------------------------------------------------------------------------

_TIFF_TYPE_SIZE = {1: 1, 2: 1, 3: 2, 4: 4, 11: 4, 12: 8}
_TIFF_TYPE_CODE = {1: "B", 3: "H", 4: "I", 11: "f", 12: "d"}


def _tiff_slice(data: bytes, offset: int, size: int) -> bytes:
    if offset < 0 or offset + size > len(data):
        raise MalformedHeader(f"offset {offset}+{size} outside file of {len(data)} bytes")
    return data[offset : offset + size]


def _tiff_values(data: bytes, endian: str, type_: int, count: int, raw: bytes):
    if type_ not in _TIFF_TYPE_SIZE:
        raise UnsupportedTiffFeature(f"unsupported tag type {type_}")
    size = _TIFF_TYPE_SIZE[type_] * count
    if size > 4:
        (offset,) = struct.unpack(endian + "I", raw)
        payload = _tiff_slice(data, offset, size)
    else:
        payload = raw[:size]
    if type_ == 2:
        return payload.rstrip(b"\0").decode("ascii", errors="replace")
    return struct.unpack(endian + _TIFF_TYPE_CODE[type_] * count, payload)


def _read_geotiff(data: bytes) -> GeoGrid:
    if len(data) < 8:
        raise MalformedHeader("truncated TIFF header")
    if data[:2] == b"II":
        endian = "<"
    elif data[:2] == b"MM":
        endian = ">"
    else:
        raise MalformedHeader(f"bad byte-order mark {data[:2]!r}")
    magic, ifd_offset = struct.unpack(endian + "HI", data[2:8])
    if magic != 42:
        raise MalformedHeader(f"bad TIFF magic {magic} (BigTIFF unsupported)")

    (n_entries,) = struct.unpack(endian + "H", _tiff_slice(data, ifd_offset, 2))
    tags: dict[int, tuple] = {}
    for i in range(n_entries):
        entry = _tiff_slice(data, ifd_offset + 2 + 12 * i, 12)
        tag, type_, count = struct.unpack(endian + "HHI", entry[:8])
        tags[tag] = (type_, count, entry[8:])

    def tag_values(tag: int, default=None):
        if tag not in tags:
            return default
        type_, count, raw = tags[tag]
        return _tiff_values(data, endian, type_, count, raw)

    def tag_scalar(tag: int, default=None):
        vals = tag_values(tag)
        return vals[0] if vals else default

    cols = tag_scalar(256)
    rows = tag_scalar(257)
    if cols is None or rows is None or rows < 1 or cols < 1:
        raise MalformedHeader("missing or bad image dimensions")
    if tag_scalar(259, 1) != 1:
        raise UnsupportedTiffFeature("compressed TIFF not supported")
    if tag_scalar(277, 1) != 1:
        raise UnsupportedTiffFeature("multi-band TIFF not supported")
    bits = tag_values(258, (32,))
    fmt = tag_values(339, (1,))
    if tuple(bits) != (32,) or tuple(fmt) != (3,):
        raise UnsupportedTiffFeature(
            f"need single 32-bit float samples, got bits={bits} format={fmt}"
        )

    pixel = np.empty((rows, cols), dtype=np.float32)
    dtype = np.dtype(endian + "f4")
    if 322 in tags:  # tile layout
        tw, th = tag_scalar(322), tag_scalar(323)
        offsets = tag_values(324)
        counts = tag_values(325)
        if not tw or not th or offsets is None or counts is None:
            raise MalformedHeader("incomplete tile layout")
        tiles_across = math.ceil(cols / tw)
        tiles_down = math.ceil(rows / th)
        if len(offsets) != tiles_across * tiles_down:
            raise InconsistentDimensions(
                f"expected {tiles_across * tiles_down} tiles, got {len(offsets)}"
            )
        for idx, (off, cnt) in enumerate(zip(offsets, counts)):
            if cnt != tw * th * 4:
                raise InconsistentDimensions(f"tile {idx} has {cnt} bytes, want {tw * th * 4}")
            tile = np.frombuffer(_tiff_slice(data, off, cnt), dtype=dtype).reshape(th, tw)
            r0 = (idx // tiles_across) * th
            c0 = (idx % tiles_across) * tw
            pixel[r0 : r0 + th, c0 : c0 + tw] = tile[: rows - r0, : cols - c0]
    else:  # strip layout
        offsets = tag_values(273)
        counts = tag_values(279)
        if offsets is None:
            raise MalformedHeader("missing strip offsets")
        rps = tag_scalar(278, rows)
        if counts is None:
            counts = tuple(
                min(rps, rows - i * rps) * cols * 4 for i in range(len(offsets))
            )
        total = sum(counts)
        if total != rows * cols * 4:
            raise InconsistentDimensions(
                f"strip bytes {total} != {rows * cols * 4} for {rows}x{cols} float32"
            )
        row = 0
        for off, cnt in zip(offsets, counts):
            if cnt % (cols * 4) != 0:
                raise InconsistentDimensions(f"strip byte count {cnt} not a row multiple")
            nrows = cnt // (cols * 4)
            strip = np.frombuffer(_tiff_slice(data, off, cnt), dtype=dtype)
            pixel[row : row + nrows] = strip.reshape(nrows, cols)
            row += nrows

    scale = tag_values(33550)
    tiepoint = tag_values(33922)
    if scale is None or tiepoint is None or len(scale) < 2 or len(tiepoint) < 6:
        raise MalformedHeader("missing pixel-scale or tiepoint georeferencing")
    sx, sy = scale[0], scale[1]
    if not (sx > 0 and sy > 0) or abs(sx - sy) > 1e-6 * max(sx, sy):
        raise UnsupportedTiffFeature(f"non-square pixels {sx} x {sy}")
    i, j, _, tx, ty, _ = tiepoint[:6]

    crs_id = 0
    geokeys = tag_values(34735)
    if geokeys and len(geokeys) >= 4:
        for k in range(4, len(geokeys) - 3, 4):
            key_id, location, _, value = geokeys[k : k + 4]
            if key_id in (3072, 2048) and location == 0:
                crs_id = int(value)
                if key_id == 3072:
                    break

    valid = np.isfinite(pixel)
    nodata_text = tag_values(42113)
    if nodata_text is not None:
        try:
            nodata = float(str(nodata_text).strip())
            valid &= pixel != np.float32(nodata)
        except ValueError:
            raise MalformedHeader(f"bad nodata tag {nodata_text!r}") from None

    return _checked_grid(
        depth=pixel,
        valid=valid,
        origin_easting=tx - i * sx,
        origin_northing=ty + j * sy,
        pixel_size=float(sx),
        crs_id=crs_id,
    )


# ---------------------------------------------------------------------------
# preview rendering
# ---------------------------------------------------------------------------


def render_grayscale(grid: GeoGrid, lo: float, hi: float) -> bytes:
    """Render depths to an 8-bit gray+alpha PNG.

    Valid pixels map linearly lo -> 0, hi -> 255 (clamped, round half up);
    nodata pixels are fully transparent.
    """
    if not lo < hi:
        raise DegenerateRange(f"lo {lo} must be < hi {hi}")
    t = np.clip((grid.depth.astype(np.float64) - lo) / (hi - lo), 0.0, 1.0)
    gray = np.floor(t * 255.0 + 0.5).astype(np.uint8)
    alpha = np.where(grid.valid, 255, 0).astype(np.uint8)
    return pngio.write_gray_alpha(gray, alpha)
