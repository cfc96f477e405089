"""Desk-scale training loop: Adam, lr schedules, best-on-val weight selection.

Training is deterministic for a given seed: shuffling uses a dedicated
generator and all array ops are single-threaded numpy. The ship class is
upweighted in the loss by default because wreck pixels are vastly outnumbered
by terrain.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..errors import EmptyManifest
from ..inpaint import inpaint
from ..preprocess import Chunk, model_input, normalize_chunk
from ..synthgen import DatasetManifest, load_pair
from .model import ModelWeights, NetConfig, forward, init_model, loss_and_grad

SCHEDULES = ("constant", "plateau", "onecycle")


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 30
    learning_rate: float = 5e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    schedule: str = "onecycle"
    batch_size: int = 64
    seed: int = 0
    ship_weight: float = 5.0
    plateau_patience: int = 10
    plateau_factor: float = 0.5

    def __post_init__(self):
        if self.learning_rate < 0:
            raise ValueError("learning_rate must be >= 0")
        if self.batch_size < 1 or self.epochs < 1:
            raise ValueError("batch_size and epochs must be >= 1")
        if self.schedule not in SCHEDULES:
            raise ValueError(f"schedule must be one of {SCHEDULES}")


class Adam:
    def __init__(self, tensors: dict[str, np.ndarray], cfg: TrainConfig):
        self.cfg = cfg
        self.m = {k: np.zeros_like(v) for k, v in tensors.items()}
        self.v = {k: np.zeros_like(v) for k, v in tensors.items()}
        self.t = 0

    def step(self, tensors: dict[str, np.ndarray], grads: dict[str, np.ndarray], lr: float):
        c = self.cfg
        self.t += 1
        bc1 = 1.0 - c.beta1**self.t
        bc2 = 1.0 - c.beta2**self.t
        for k, g in grads.items():
            g = g.astype(tensors[k].dtype, copy=False)
            self.m[k] = c.beta1 * self.m[k] + (1.0 - c.beta1) * g
            self.v[k] = c.beta2 * self.v[k] + (1.0 - c.beta2) * g * g
            tensors[k] = tensors[k] - lr * (self.m[k] / bc1) / (
                np.sqrt(self.v[k] / bc2) + c.eps
            )


def _onecycle_lr(step: int, total_steps: int, peak: float) -> float:
    """Linear ramp over the first 30% of steps, then cosine decay to zero."""
    warm = max(1, round(0.3 * total_steps))
    if step < warm:
        return peak * (step + 1) / warm
    if total_steps == warm:
        return peak
    frac = (step - warm) / (total_steps - warm)
    return peak * 0.5 * (1.0 + math.cos(math.pi * frac))


def prepare_tile(grid, label, in_channels: int):
    """Sample grid + label -> (x, y, valid) network arrays.

    Mirrors the inference path exactly: per-tile min-max normalization,
    hole filling, optional hillshade channel from the denormalized surface.
    """
    chunk = Chunk(
        parent_id="", row_off=0, col_off=0,
        data=grid.depth.copy(), valid=grid.valid.copy(),
        pad_right=0, pad_bottom=0, pixel_size=grid.pixel_size,
    )
    nc = inpaint(normalize_chunk(chunk))
    x = model_input(nc, use_hillshade=(in_channels == 2))
    y = np.asarray(label, dtype=np.int64)
    return x, y, grid.valid.copy()


def _load_split(manifest: DatasetManifest, split: str, in_channels: int):
    tiles = []
    for entry in manifest.for_split(split):
        grid, label = load_pair(manifest, entry)
        tiles.append(prepare_tile(grid, label, in_channels))
    return tiles


def _batches(tiles, order, batch_size: int):
    """Group the shuffled order into batches of shape-compatible tiles."""
    batch: list[int] = []
    shape = None
    for idx in order:
        s = tiles[idx][0].shape
        if batch and (s != shape or len(batch) >= batch_size):
            yield batch
            batch = []
        batch.append(idx)
        shape = s
    if batch:
        yield batch


def _iou_ship(weights: ModelWeights, tiles, batch_size: int) -> float:
    tp = fp = fn = 0
    for batch in _batches(tiles, range(len(tiles)), batch_size):
        x = np.stack([tiles[i][0] for i in batch])
        y = np.stack([tiles[i][1] for i in batch])
        v = np.stack([tiles[i][2] for i in batch])
        pred = forward(weights, x).argmax(axis=1)
        tp += int(((pred == 1) & (y == 1) & v).sum())
        fp += int(((pred == 1) & (y == 0) & v).sum())
        fn += int(((pred == 0) & (y == 1) & v).sum())
    denom = tp + fp + fn
    return tp / denom if denom else 0.0


def _mean_loss(weights: ModelWeights, tiles, batch_size: int, class_weights) -> float:
    total, n = 0.0, 0
    for batch in _batches(tiles, range(len(tiles)), batch_size):
        x = np.stack([tiles[i][0] for i in batch])
        y = np.stack([tiles[i][1] for i in batch])
        v = np.stack([tiles[i][2] for i in batch])
        loss, _ = loss_and_grad(weights, x, y, v, class_weights)
        total += loss * len(batch)
        n += len(batch)
    return total / n if n else 0.0


def train(
    manifest: DatasetManifest,
    net_cfg: NetConfig,
    train_cfg: TrainConfig,
) -> tuple[ModelWeights, list[dict]]:
    """Train on the manifest's train split, track the val split each epoch,
    and return the weights with the best val IoU plus the epoch history."""
    train_tiles = _load_split(manifest, "train", net_cfg.in_channels)
    val_tiles = _load_split(manifest, "val", net_cfg.in_channels)
    if not train_tiles or not val_tiles:
        raise EmptyManifest(
            f"need >= 1 train and >= 1 val entry, got {len(train_tiles)}/{len(val_tiles)}"
        )

    class_weights = np.array(
        [1.0] + [train_cfg.ship_weight] * (net_cfg.classes - 1), dtype=np.float32
    )
    weights = init_model(net_cfg, train_cfg.seed)
    opt = Adam(weights.tensors, train_cfg)
    rng = np.random.default_rng(train_cfg.seed)

    steps_per_epoch = sum(
        1 for _ in _batches(train_tiles, range(len(train_tiles)), train_cfg.batch_size)
    )
    total_steps = steps_per_epoch * train_cfg.epochs
    lr = train_cfg.learning_rate
    step = 0
    history: list[dict] = []
    best_key = (-1.0, -np.inf)  # (val IoU, -val loss): loss breaks IoU ties
    best_weights = weights.copy()
    stagnant = 0

    for epoch in range(train_cfg.epochs):
        order = rng.permutation(len(train_tiles))
        epoch_loss, seen = 0.0, 0
        for batch in _batches(train_tiles, order, train_cfg.batch_size):
            if train_cfg.schedule == "onecycle":
                lr = _onecycle_lr(step, total_steps, train_cfg.learning_rate)
            x = np.stack([train_tiles[i][0] for i in batch])
            y = np.stack([train_tiles[i][1] for i in batch])
            v = np.stack([train_tiles[i][2] for i in batch])
            loss, grads = loss_and_grad(weights, x, y, v, class_weights)
            opt.step(weights.tensors, grads, lr)
            epoch_loss += loss * len(batch)
            seen += len(batch)
            step += 1

        val_loss = _mean_loss(weights, val_tiles, train_cfg.batch_size, class_weights)
        val_iou = _iou_ship(weights, val_tiles, train_cfg.batch_size)
        history.append(
            {
                "epoch": epoch,
                "lr": lr,
                "train_loss": epoch_loss / max(seen, 1),
                "val_loss": val_loss,
                "val_iou_ship": val_iou,
            }
        )
        key = (val_iou, -val_loss)
        if key > best_key:
            best_key = key
            best_weights = weights.copy()
            stagnant = 0
        else:
            stagnant += 1
            if train_cfg.schedule == "plateau" and stagnant >= train_cfg.plateau_patience:
                lr *= train_cfg.plateau_factor
                stagnant = 0

    return best_weights, history
