"""Threshold probability maps, filter small detections, vectorize to GeoJSON.

Conventions shared with every client: mask = (p >= t) on valid pixels,
components are 8-connected, and the size filter works in square meters so it
is resolution-independent. Bounding boxes and outline polygons are emitted as
an RFC 7946-structured FeatureCollection in the grid's native projected
coordinates, with the EPSG-style code recorded as a "crs_id" foreign member.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

from .detect import ProbabilityMap
from .errors import MissingGeoreference

_FOUR = ndimage.generate_binary_structure(2, 1)
_EIGHT = np.ones((3, 3), dtype=bool)


@dataclass(frozen=True)
class GeoRef:
    origin_easting: float
    origin_northing: float
    pixel_size: float
    crs_id: int = 0

    @classmethod
    def of(cls, layer) -> "GeoRef":
        return cls(layer.origin_easting, layer.origin_northing, layer.pixel_size, layer.crs_id)


@dataclass
class Component:
    """One 8-connected detection region."""

    id: int
    pixels: np.ndarray  # (n, 2) int32 (row, col), scan order
    area_px: int
    area_m2: float
    bbox_px: tuple[int, int, int, int]  # (row0, col0, row1, col1) inclusive
    mean_probability: float | None = None


@dataclass
class DetectionSet:
    mask: np.ndarray  # uint8
    components: list[Component]
    georef: GeoRef | None = None


def threshold(p: ProbabilityMap, t: float) -> np.ndarray:
    """Binary mask: probability >= t on valid pixels, 0 on nodata."""
    if not 0.0 <= t <= 1.0:
        raise ValueError("threshold must lie in [0, 1]")
    return ((p.values >= t) & p.valid).astype(np.uint8)


def extract_components(
    mask: np.ndarray,
    connectivity: int = 8,
    pixel_size: float = 1.0,
    probability: np.ndarray | None = None,
) -> list[Component]:
    """Maximal connected regions of a binary mask.

    Component ids follow the scan order of each region's topmost-leftmost
    pixel, so labeling is deterministic.
    """
    if connectivity not in (4, 8):
        raise ValueError("connectivity must be 4 or 8")
    mask = np.asarray(mask) != 0
    labels, count = ndimage.label(mask, structure=_EIGHT if connectivity == 8 else _FOUR)
    if count == 0:
        return []
    # order regions by first pixel in scan order
    flat = labels.ravel()
    first = np.full(count + 1, flat.size, dtype=np.int64)
    np.minimum.at(first, flat, np.arange(flat.size))
    order = sorted(range(1, count + 1), key=lambda lab: first[lab])

    components = []
    for new_id, lab in enumerate(order, start=1):
        rows, cols = np.nonzero(labels == lab)
        pixels = np.stack([rows, cols], axis=1).astype(np.int32)
        mean_p = (
            float(probability[rows, cols].astype(np.float64).mean())
            if probability is not None
            else None
        )
        components.append(
            Component(
                id=new_id,
                pixels=pixels,
                area_px=int(pixels.shape[0]),
                area_m2=float(pixels.shape[0]) * pixel_size**2,
                bbox_px=(int(rows.min()), int(cols.min()), int(rows.max()), int(cols.max())),
                mean_probability=mean_p,
            )
        )
    return components


def filter_components(
    components: list[Component],
    min_area_m2: float,
    mask_shape: tuple[int, int],
    georef: GeoRef | None = None,
) -> DetectionSet:
    """Keep components of at least min_area_m2 and rebuild the mask."""
    if min_area_m2 < 0:
        raise ValueError("min_area_m2 must be >= 0")
    kept = [c for c in components if c.area_m2 >= min_area_m2]
    mask = np.zeros(mask_shape, dtype=np.uint8)
    for c in kept:
        mask[c.pixels[:, 0], c.pixels[:, 1]] = 1
    return DetectionSet(mask=mask, components=kept, georef=georef)


def detections_from_probability(
    p: ProbabilityMap, t: float, min_area_m2: float, connectivity: int = 8
) -> DetectionSet:
    """threshold -> components -> area filter, wired for one probability map."""
    mask = threshold(p, t)
    comps = extract_components(mask, connectivity, p.pixel_size, p.values)
    return filter_components(comps, min_area_m2, mask.shape, GeoRef.of(p))


# ---------------------------------------------------------------------------
# vectorization
# ---------------------------------------------------------------------------


def _world(georef: GeoRef, col: float, row: float) -> list[float]:
    return [
        georef.origin_easting + col * georef.pixel_size,
        georef.origin_northing - row * georef.pixel_size,
    ]


def _boundary_rings(pixels: np.ndarray) -> list[list[tuple[int, int]]]:
    """Closed rings of pixel-corner vertices around a set of pixels.

    Directed edges keep the region on the side that yields counterclockwise
    exteriors and clockwise holes once rows are flipped into world y-up.
    """
    cells = {(int(r), int(c)) for r, c in pixels}
    edges: dict[tuple[int, int], list[tuple[int, int]]] = {}

    def add(a, b):
        edges.setdefault(a, []).append(b)

    for r, c in cells:
        if (r - 1, c) not in cells:
            add((c + 1, r), (c, r))
        if (r + 1, c) not in cells:
            add((c, r + 1), (c + 1, r + 1))
        if (r, c - 1) not in cells:
            add((c, r), (c, r + 1))
        if (r, c + 1) not in cells:
            add((c + 1, r + 1), (c + 1, r))

    rings = []
    while edges:
        start = min(edges)
        ring = [start]
        prev_dir = None
        v = start
        while True:
            outs = edges[v]
            if len(outs) == 1 or prev_dir is None:
                nxt = outs.pop(0)
            else:
                # pinch vertex (diagonal touch): prefer the sharpest left turn
                # relative to the incoming direction to keep rings simple
                def turn(b):
                    d = (b[0] - v[0], b[1] - v[1])
                    cross = prev_dir[0] * d[1] - prev_dir[1] * d[0]
                    return cross
                outs.sort(key=turn)
                nxt = outs.pop(0)
            if not edges[v]:
                del edges[v]
            prev_dir = (nxt[0] - v[0], nxt[1] - v[1])
            v = nxt
            if v == start:
                break
            ring.append(v)
        rings.append(ring)
    return rings


def _ring_area_world(ring: list[tuple[int, int]]) -> float:
    # shoelace with y flipped (world northing decreases with row)
    area = 0.0
    n = len(ring)
    for i in range(n):
        x0, y0 = ring[i][0], -ring[i][1]
        x1, y1 = ring[(i + 1) % n][0], -ring[(i + 1) % n][1]
        area += x0 * y1 - x1 * y0
    return area / 2.0


def _point_in_ring(pt, ring) -> bool:
    x, y = pt
    inside = False
    n = len(ring)
    for i in range(n):
        x0, y0 = ring[i]
        x1, y1 = ring[(i + 1) % n]
        if (y0 > y) != (y1 > y) and x < x0 + (y - y0) * (x1 - x0) / (y1 - y0):
            inside = not inside
    return inside


def _component_geometry(comp: Component, georef: GeoRef) -> dict:
    rings = _boundary_rings(comp.pixels)
    exteriors = []
    holes = []
    for ring in rings:
        closed = ring + [ring[0]]
        coords = [_world(georef, x, y) for x, y in closed]
        if _ring_area_world(ring) > 0:
            exteriors.append((ring, coords))
        else:
            holes.append((ring, coords))
    polygons = [[coords] for _, coords in exteriors]
    for hring, hcoords in holes:
        probe = (hring[0][0] + 0.25, hring[0][1] + 0.25)
        target = 0
        for i, (ering, _) in enumerate(exteriors):
            if _point_in_ring(probe, ering):
                target = i
                break
        polygons[target].append(hcoords)
    if len(polygons) == 1:
        return {"type": "Polygon", "coordinates": polygons[0]}
    return {"type": "MultiPolygon", "coordinates": polygons}


def to_geojson(dset: DetectionSet, mode: str = "boxes") -> str:
    """FeatureCollection of detections in native planar coordinates.

    boxes mode emits axis-aligned world rectangles from the pixel bounding
    boxes; outlines mode emits the traced component boundary polygons. Every
    feature carries the component id, area_m2, and mean_probability.
    """
    if mode not in ("boxes", "outlines"):
        raise ValueError("mode must be 'boxes' or 'outlines'")
    if dset.georef is None:
        raise MissingGeoreference("detection set has no georeferencing")
    g = dset.georef
    features = []
    for comp in dset.components:
        if mode == "boxes":
            r0, c0, r1, c1 = comp.bbox_px
            ring = [
                _world(g, c0, r1 + 1),
                _world(g, c1 + 1, r1 + 1),
                _world(g, c1 + 1, r0),
                _world(g, c0, r0),
                _world(g, c0, r1 + 1),
            ]
            geometry = {"type": "Polygon", "coordinates": [ring]}
        else:
            geometry = _component_geometry(comp, g)
        features.append(
            {
                "type": "Feature",
                "geometry": geometry,
                "properties": {
                    "component": comp.id,
                    "area_m2": comp.area_m2,
                    "mean_probability": comp.mean_probability,
                },
            }
        )
    doc = {
        "type": "FeatureCollection",
        "crs_id": g.crs_id,
        "features": features,
    }
    return json.dumps(doc, separators=(",", ":"), sort_keys=False)
