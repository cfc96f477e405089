# Chunking, normalization, inpainting, hillshade
#
# Surveys arrive at wildly different resolutions, so the network always sees
# a fixed 200 x 200 m window: chunk pixel size adapts to the raster. Each
# chunk is min-max normalized (depth-invariant), survey gaps are filled by
# isophote-guided diffusion, and a hillshade channel can be derived.

import numpy as np

from bathyseg import ChunkerConfig, chunk_grid, hillshade, inpaint, normalize_chunk
from bathyseg.preprocess import denormalize
from bathyseg.synthgen import generate_terrain

grid = generate_terrain(600, 600, pixel_size=0.5, base_depth=80.0, roughness=2.0, seed=4)

# 0.5 m/px -> 400 px chunks; the 600 px grid tiles into 2x2 with edge padding.
chunks = chunk_grid(grid, ChunkerConfig())
print(f"{len(chunks)} chunks of {chunks[0].data.shape} px "
      f"(pad_right={chunks[-1].pad_right}, pad_bottom={chunks[-1].pad_bottom})")

# Knock a hole in one chunk to show the inpainting path.
chunk = chunks[0]
holes = np.ones_like(chunk.valid)
holes[150:190, 120:180] = False
damaged = type(chunk)(parent_id=chunk.parent_id, row_off=chunk.row_off,
                      col_off=chunk.col_off, data=chunk.data,
                      valid=chunk.valid & holes, pad_right=chunk.pad_right,
                      pad_bottom=chunk.pad_bottom, pixel_size=chunk.pixel_size)

nc = normalize_chunk(damaged)
print(f"normalized to [0, 1], restore range {nc.depth_min:.1f}..{nc.depth_max:.1f} m")

filled = inpaint(nc)
print("inpaint converged:", filled.fill_converged,
      "| filled pixels:", int((~nc.valid).sum()))

# Hillshade runs on the restored (denormalized) surface so slopes are physical.
shade = hillshade(denormalize(filled), pixel_size=chunk.pixel_size)
print(f"hillshade range {shade.min():.0f}..{shade.max():.0f} "
      f"(flat terrain would sit near 180)")
