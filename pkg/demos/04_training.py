# Training the compact segmentation net
#
# The network is a symmetric encoder-decoder with skip connections, written
# in plain numpy with explicit backprop: per stage two 3x3 conv+ReLU layers
# and a 2x2 max pool, mirrored by bilinear upsampling + skip concat, then a
# 1x1 head. Adam with a one-cycle schedule, ship pixels upweighted in the
# cross-entropy. A few minutes of CPU reaches usable desk-scale accuracy.

from pathlib import Path

from bathyseg import NetConfig, TrainConfig, save_weights, train
from bathyseg.synthgen import DatasetManifest, SynthConfig, build_dataset, generate_terrain, synthetic_ship

out = Path(__file__).parent / "out"
data = out / "dataset"
if not (data / "manifest.tsv").exists():
    ships = [synthetic_ship(14 + 2 * (s % 4), 5 + s % 3, 2.0 + 0.5 * (s % 3),
                            1.0, seed=s, source_id=f"hull{s:02d}") for s in range(12)]
    terrains = [generate_terrain(64, 64, 1.0, 90.0, 1.5, seed=100 + t) for t in range(6)]
    build_dataset(ships, terrains, (0, 90, 70), SynthConfig(seed=7), data)

manifest = DatasetManifest.load(data / "manifest.tsv")

net = NetConfig(in_channels=2, stages=3, base_channels=8)  # depth + hillshade
cfg = TrainConfig(epochs=12, learning_rate=5e-4, schedule="onecycle",
                  batch_size=8, seed=0, ship_weight=5.0)
weights, history = train(manifest, net, cfg)

for h in history:
    print(f"epoch {h['epoch']:2d}  lr {h['lr']:.2e}  "
          f"train {h['train_loss']:.4f}  val {h['val_loss']:.4f}  "
          f"val IoU_ship {h['val_iou_ship']:.3f}")

(out / "model.swnn").write_bytes(save_weights(weights))
print("saved", out / "model.swnn")
