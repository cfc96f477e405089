# Whole-layer detection and GeoJSON export
#
# Inference tiles the survey into 200 m chunks, runs each through the net,
# and stitches the softmax ship channel back into one probability layer
# (overlaps average; beyond 500 tiles the merge recurses in batches to bound
# memory). Thresholding, component filtering, and vectorization turn that
# layer into bounding boxes or outline polygons.

from pathlib import Path

import numpy as np

from bathyseg import (
    ChunkerConfig,
    SynthConfig,
    composite,
    detections_from_probability,
    infer_cnn,
    load_weights,
    synthetic_ship,
    to_geojson,
)
from bathyseg.synthgen import generate_terrain

out = Path(__file__).parent / "out"
weights_path = out / "model.swnn"
if not weights_path.exists():
    raise SystemExit("run 04_training.py first")
weights = load_weights(weights_path.read_bytes())

# Stage a 256 m survey with two planted wrecks.
terrain = generate_terrain(256, 256, 1.0, 92.0, 1.5, seed=31)
rng = np.random.default_rng(5)
scene, label1 = composite(synthetic_ship(16, 6, 2.5, 1.0, seed=50), terrain,
                          SynthConfig(), rng)
scene, label2 = composite(synthetic_ship(13, 5, 2.0, 1.0, seed=51), scene,
                          SynthConfig(), rng)
truth = (label1 | label2).astype(bool)

# The desk-scale weights were trained on 64 m tiles, so inference uses the
# same chunk extent; the half-extent stride makes the tiles overlap and the
# merge average the seams.
chunker = ChunkerConfig(chunk_extent=64.0, stride=32.0)
prob = infer_cnn(scene, weights, use_hillshade=True, chunker=chunker)
print(f"probability layer {prob.rows}x{prob.cols}; "
      f"mean over wrecks {prob.values[truth].mean():.2f} vs "
      f"terrain {prob.values[~truth].mean():.2f}")

dset = detections_from_probability(prob, t=0.5, min_area_m2=10.0)
print(f"{len(dset.components)} detections after the 10 m^2 area filter")
for comp in dset.components:
    print(f"  component {comp.id}: {comp.area_m2:.0f} m^2, "
          f"mean p {comp.mean_probability:.2f}, bbox px {comp.bbox_px}")

(out / "detections.boxes.geojson").write_text(to_geojson(dset, "boxes"))
(out / "detections.outlines.geojson").write_text(to_geojson(dset, "outlines"))
print("wrote", out / "detections.boxes.geojson")
