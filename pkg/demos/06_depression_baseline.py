# The analytic inverse-sinkhole baseline
#
# No training required: wrecks stand proud of the seafloor, so on the
# inverted surface they are pits. Priority-flood filling raises every cell to
# its spill level; cells that had to rise belong to depressions. Regions are
# kept if they are deep enough (MinDepth) and large enough (MinDepress cells,
# defined at 0.5 m/px and rescaled by resolution), then dilated by a small
# buffer.

import numpy as np

from bathyseg import DepressionParams, infer_depression
from bathyseg.depression import depression_regions
from bathyseg.grid_io import GeoGrid

depth = np.full((64, 64), 100.0, dtype=np.float32)
depth[20:32, 14:26] = 99.4   # a wreck-sized mound, 0.6 m proud
depth[40:44, 40:44] = 99.95  # noise bump, too shallow to keep
grid = GeoGrid(depth=depth, valid=np.ones_like(depth, dtype=bool),
               origin_easting=0.0, origin_northing=64.0, pixel_size=1.0, crs_id=0)

params = DepressionParams(min_depress=100, buffer=1, interval=0.2, min_depth=0.2)
mask = infer_depression(grid, params)
print(f"detected {int(mask.values.sum())} cells "
      f"(mound is 144 px + a 1-cell buffer ring)")

_, regions, _ = depression_regions(grid, params)
for r in regions:
    print(f"region {r['id']}: {r['cells']} cells, max fill {r['max_fill_depth']:.2f} m, "
          f"contours at {[round(v, 1) for v in r['contour_levels']]}")
