# Reading and writing bathymetry rasters
#
# The pipeline's native container is the .bgrd binary grid, which round-trips
# bit-exactly. EsriAscii, XYZ point lists, and a single-band float GeoTIFF
# subset can be read; the first two can also be written.

from pathlib import Path

import numpy as np

from bathyseg import GeoGrid, RasterFormat, read_grid, render_grayscale, write_grid
from bathyseg.synthgen import generate_terrain

out = Path(__file__).parent / "out"
out.mkdir(exist_ok=True)

# A procedural seafloor stands in for a survey export.
grid = generate_terrain(rows=256, cols=256, pixel_size=1.0, base_depth=95.0,
                        roughness=2.5, seed=11, crs_id=32616)
print(f"grid: {grid.rows}x{grid.cols} @ {grid.pixel_size} m/px, "
      f"depths {grid.depth.min():.1f}..{grid.depth.max():.1f} m")

# Round-trip through the binary container is bit-exact.
blob = write_grid(grid, RasterFormat.INTERNAL_BINARY)
assert read_grid(blob, RasterFormat.INTERNAL_BINARY) == grid
(out / "terrain.bgrd").write_bytes(blob)

# EsriAscii is text; depths survive to within 1e-4 m.
asc = write_grid(grid, RasterFormat.ESRI_ASCII)
again = read_grid(asc, RasterFormat.ESRI_ASCII)
print("ascii max depth error:", np.abs(again.depth - grid.depth).max())

# Scattered soundings bin onto a regular grid (mean per cell, gaps -> nodata).
xyz = b"0 0 10.0\n1 0 12.0\n0 1 11.0\n1 1 13.0\n3 1 9.0\n"
points = read_grid(xyz, RasterFormat.XYZ_POINTS)
print(f"xyz: {points.rows}x{points.cols} grid, "
      f"{int(points.valid.sum())} of {points.valid.size} cells hit")

# Grayscale previews map a depth window to 8-bit gray; nodata is transparent.
png = render_grayscale(grid, float(grid.depth.min()), float(grid.depth.max()))
(out / "terrain_preview.png").write_bytes(png)
print("wrote", out / "terrain.bgrd", "and", out / "terrain_preview.png")
