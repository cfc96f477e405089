# Scoring detections
#
# All metrics pool global pixel counts across the test set, so larger and
# higher-resolution layers carry proportionally more weight, and per-tile
# evaluation sums to exactly the whole-set numbers. The wreck count
# percentage asks a softer question: for what fraction of wrecks did we get
# at least IoU 0.2?

import numpy as np

from bathyseg import ConfusionCounts, confusion, report, runtime_per_mb, wreck_count_pct
from bathyseg.metrics import PerWreck, RuntimeRecord, format_report

rng = np.random.default_rng(8)

# Fake a small test set: three tiles with wrecks, two clean ones.
pooled = ConfusionCounts()
per_wreck = []
for i in range(5):
    gt = np.zeros((64, 64), dtype=np.uint8)
    if i < 3:
        gt[10:20, 10 + i * 12 : 22 + i * 12] = 1
    # imperfect predictions: erode one edge, add a couple of stray pixels
    pred = gt.copy()
    pred[:, 10 + i * 12] = 0
    pred[50 + i, 50] = 1
    counts = confusion(pred, gt)
    pooled = pooled + counts
    if gt.any():
        denom = counts.tp + counts.fp + counts.fn
        per_wreck.append(PerWreck(f"tile{i}", counts.tp / denom, 1.0, 90.0))

rep = report(pooled, per_wreck=per_wreck)
print(format_report(rep))
print()
print("wreck count pct at tau 0.2:", wreck_count_pct([w.iou_ship for w in per_wreck]))

# Runtime normalizes per megabyte so layers of different sizes compare fairly.
records = [RuntimeRecord("layerA", runtime_s=10.0, size_mb=5.0),
           RuntimeRecord("layerB", runtime_s=20.0, size_mb=10.0)]
print("runtime per MB:", runtime_per_mb(records), "s/MB")
