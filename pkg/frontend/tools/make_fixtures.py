"""Regenerates the client/server parity fixtures in tests/fixtures/.

Builds a deterministic probability layer, runs the server-side
threshold/components/area-filter path at several (t, min_area) pairs, and
freezes the resulting masks and boxes so the TypeScript tests can assert
pixel-exact parity without a live Python server.

Run from the frontend directory: python3 tools/make_fixtures.py
"""

import json
from pathlib import Path

import numpy as np

from bathyseg.detect import ProbabilityMap
from bathyseg.grid_io import RasterFormat, write_grid
from bathyseg.postprocess import detections_from_probability, to_geojson
from bathyseg.synthgen import generate_terrain

FIXTURES = Path(__file__).parent.parent / "tests" / "fixtures"
PAIRS = [(0.0, 0.0), (0.3, 5.0), (0.5, 10.0), (0.7, 2.0), (0.9, 0.0)]


def main():
    FIXTURES.mkdir(parents=True, exist_ok=True)
    # a smooth seeded field rescaled to [0, 1] gives realistic blobs at
    # several thresholds; a nodata wedge exercises the valid mask
    terrain = generate_terrain(96, 128, 0.5, 0.0, 1.0, seed=2024)
    values = terrain.depth.astype(np.float64)
    values = (values - values.min()) / (values.max() - values.min())
    valid = np.ones(values.shape, dtype=bool)
    valid[:20, :30] = False
    prob = ProbabilityMap(
        values=values.astype(np.float32),
        valid=valid,
        origin_easting=443000.0,
        origin_northing=5.01e6,
        pixel_size=0.5,
        crs_id=32616,
    )
    (FIXTURES / "probability.bgrd").write_bytes(
        write_grid(prob.to_grid(), RasterFormat.INTERNAL_BINARY)
    )

    manifest = []
    for t, min_area in PAIRS:
        dset = detections_from_probability(prob, t, min_area)
        name = f"mask_t{t:.2f}_a{min_area:g}"
        (FIXTURES / f"{name}.bin").write_bytes(dset.mask.astype(np.uint8).tobytes())
        boxes_name = f"boxes_t{t:.2f}_a{min_area:g}.geojson"
        (FIXTURES / boxes_name).write_text(to_geojson(dset, "boxes"))
        manifest.append(
            {
                "threshold": t,
                "min_area_m2": min_area,
                "mask": f"{name}.bin",
                "boxes": boxes_name,
                "components": len(dset.components),
            }
        )
    (FIXTURES / "params.json").write_text(json.dumps(manifest, indent=2))
    print(f"wrote fixtures for {len(PAIRS)} parameter pairs to {FIXTURES}")


if __name__ == "__main__":
    main()
