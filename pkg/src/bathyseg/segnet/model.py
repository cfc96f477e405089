"""Compact encoder-decoder segmentation network.

Symmetric topology with skip connections: each encoder stage is two 3x3
conv+ReLU layers followed by a 2x2 max pool; the decoder mirrors it with
bilinear x2 upsampling, a channel-concatenated skip, and two conv+ReLU
layers; a final 1x1 convolution maps to class logits at input resolution.
Width and depth are configurable so the same code covers gradient-check toys
and desk-scale training runs.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import ShapeMismatch
from . import layers


@dataclass(frozen=True)
class NetConfig:
    in_channels: int = 1  # 1 = depth, 2 = depth + hillshade
    stages: int = 3
    base_channels: int = 16
    classes: int = 2

    def __post_init__(self):
        if self.in_channels not in (1, 2):
            raise ValueError("in_channels must be 1 or 2")
        if self.stages < 1:
            raise ValueError("stages must be >= 1")
        if self.base_channels < 1 or self.classes < 2:
            raise ValueError("base_channels >= 1 and classes >= 2 required")


def tensor_spec(cfg: NetConfig) -> list[tuple[str, tuple[int, ...]]]:
    """Ordered (name, shape) pairs for every parameter tensor."""
    spec: list[tuple[str, tuple[int, ...]]] = []

    def block(prefix: str, c_in: int, c_out: int):
        spec.append((f"{prefix}.conv1.w", (c_out, c_in, 3, 3)))
        spec.append((f"{prefix}.conv1.b", (c_out,)))
        spec.append((f"{prefix}.conv2.w", (c_out, c_out, 3, 3)))
        spec.append((f"{prefix}.conv2.b", (c_out,)))

    c_prev = cfg.in_channels
    for s in range(cfg.stages):
        c_out = cfg.base_channels * 2**s
        block(f"enc{s}", c_prev, c_out)
        c_prev = c_out
    block("bottleneck", c_prev, cfg.base_channels * 2**cfg.stages)
    c_prev = cfg.base_channels * 2**cfg.stages
    for s in reversed(range(cfg.stages)):
        c_skip = cfg.base_channels * 2**s
        block(f"dec{s}", c_prev + c_skip, c_skip)
        c_prev = c_skip
    spec.append(("head.w", (cfg.classes, c_prev, 1, 1)))
    spec.append(("head.b", (cfg.classes,)))
    return spec


@dataclass
class ModelWeights:
    """Named float32 tensors plus the config they instantiate."""

    tensors: dict[str, np.ndarray]
    config: NetConfig
    format_version: int = 1

    def validate(self):
        expected = tensor_spec(self.config)
        names = [n for n, _ in expected]
        if list(self.tensors.keys()) != names:
            raise ShapeMismatch("tensor names do not match the network config")
        for name, shape in expected:
            t = self.tensors[name]
            if tuple(t.shape) != shape:
                raise ShapeMismatch(f"{name} has shape {t.shape}, expected {shape}")
            if not np.all(np.isfinite(t)):
                raise ShapeMismatch(f"{name} contains non-finite values")

    def copy(self) -> "ModelWeights":
        return ModelWeights(
            tensors={k: v.copy() for k, v in self.tensors.items()},
            config=self.config,
            format_version=self.format_version,
        )


def init_model(cfg: NetConfig, seed: int) -> ModelWeights:
    """He-normal kernels (std = sqrt(2 / fan_in)), zero biases; deterministic."""
    rng = np.random.default_rng(seed)
    tensors: dict[str, np.ndarray] = {}
    for name, shape in tensor_spec(cfg):
        if name.endswith(".w"):
            fan_in = int(np.prod(shape[1:]))
            tensors[name] = rng.normal(0.0, np.sqrt(2.0 / fan_in), size=shape).astype(
                np.float32
            )
        else:
            tensors[name] = np.zeros(shape, dtype=np.float32)
    w = ModelWeights(tensors=tensors, config=cfg)
    w.validate()
    return w


def _pad_to_multiple(x: np.ndarray, multiple: int) -> tuple[np.ndarray, int, int]:
    h, w = x.shape[2], x.shape[3]
    pad_h = (-h) % multiple
    pad_w = (-w) % multiple
    if pad_h == 0 and pad_w == 0:
        return x, 0, 0
    mode = "reflect" if min(h, w) > max(pad_h, pad_w) else "edge"
    return np.pad(x, ((0, 0), (0, 0), (0, pad_h), (0, pad_w)), mode=mode), pad_h, pad_w


def _cast_weights(weights: ModelWeights, dtype) -> dict[str, np.ndarray]:
    return {k: v.astype(dtype, copy=False) for k, v in weights.tensors.items()}


def _forward_internal(t: dict[str, np.ndarray], cfg: NetConfig, x: np.ndarray):
    caches = {"skips": [], "enc": [], "pool": [], "dec": [], "up": []}

    def conv_block(prefix, h, cache_list):
        out1, c1 = layers.conv2d_forward(h, t[f"{prefix}.conv1.w"], t[f"{prefix}.conv1.b"])
        act1, m1 = layers.relu_forward(out1)
        out2, c2 = layers.conv2d_forward(act1, t[f"{prefix}.conv2.w"], t[f"{prefix}.conv2.b"])
        act2, m2 = layers.relu_forward(out2)
        cache_list.append((prefix, c1, m1, c2, m2))
        return act2

    h = x
    for s in range(cfg.stages):
        h = conv_block(f"enc{s}", h, caches["enc"])
        caches["skips"].append(h)
        h, pc = layers.maxpool2_forward(h)
        caches["pool"].append(pc)
    h = conv_block("bottleneck", h, caches["enc"])
    for s in reversed(range(cfg.stages)):
        h, uc = layers.upsample2_forward(h)
        caches["up"].append(uc)
        h = np.concatenate([h, caches["skips"][s]], axis=1)
        h = conv_block(f"dec{s}", h, caches["dec"])
    logits, hc = layers.conv2d_forward(h, t["head.w"], t["head.b"])
    caches["head"] = hc
    return logits, caches


def forward(weights: ModelWeights, x: np.ndarray) -> np.ndarray:
    """Logits with the same spatial dims as the input.

    x is (B, C, H, W); H and W are reflect-padded up to a multiple of
    2**stages internally and the output is cropped back.
    """
    cfg = weights.config
    x = np.asarray(x)
    if x.ndim != 4 or x.shape[1] != cfg.in_channels:
        raise ShapeMismatch(
            f"expected (B, {cfg.in_channels}, H, W) input, got {x.shape}"
        )
    h_in, w_in = x.shape[2], x.shape[3]
    xp, _, _ = _pad_to_multiple(x, 2**cfg.stages)
    t = _cast_weights(weights, xp.dtype)
    logits, _ = _forward_internal(t, cfg, xp)
    return logits[:, :, :h_in, :w_in]


def loss_and_grad(
    weights: ModelWeights,
    x: np.ndarray,
    labels: np.ndarray,
    valid: np.ndarray | None = None,
    class_weights: np.ndarray | None = None,
    dtype=np.float32,
):
    """Masked softmax cross-entropy and gradients for every tensor.

    Inputs whose spatial dims are not multiples of 2**stages are padded; the
    padded pixels are excluded from the loss, so parameter gradients are exact
    for the stated objective. dtype=np.float64 runs the whole pass in 64-bit
    for finite-difference checks.
    """
    cfg = weights.config
    x = np.asarray(x, dtype=dtype)
    labels = np.asarray(labels)
    if x.ndim != 4 or x.shape[1] != cfg.in_channels:
        raise ShapeMismatch(f"expected (B, {cfg.in_channels}, H, W) input, got {x.shape}")
    if labels.shape != (x.shape[0], x.shape[2], x.shape[3]):
        raise ShapeMismatch(f"labels {labels.shape} do not match input {x.shape}")
    if valid is None:
        valid = np.ones(labels.shape, dtype=bool)

    h_in, w_in = x.shape[2], x.shape[3]
    xp, pad_h, pad_w = _pad_to_multiple(x, 2**cfg.stages)
    if pad_h or pad_w:
        labels = np.pad(labels, ((0, 0), (0, pad_h), (0, pad_w)))
        valid = np.pad(valid, ((0, 0), (0, pad_h), (0, pad_w)), constant_values=False)

    t = _cast_weights(weights, dtype)
    logits, caches = _forward_internal(t, cfg, xp)
    cw = None if class_weights is None else np.asarray(class_weights, dtype=dtype)
    loss, dlogits, _ = layers.softmax_ce_loss(logits, labels, valid, cw)

    grads = {name: None for name in t}

    def conv_block_backward(cache_entry, dh):
        prefix, c1, m1, c2, m2 = cache_entry
        dh = layers.relu_backward(dh, m2)
        dh, dw2, db2 = layers.conv2d_backward(dh, c2)
        dh = layers.relu_backward(dh, m1)
        dh, dw1, db1 = layers.conv2d_backward(dh, c1)
        grads[f"{prefix}.conv2.w"] = dw2
        grads[f"{prefix}.conv2.b"] = db2
        grads[f"{prefix}.conv1.w"] = dw1
        grads[f"{prefix}.conv1.b"] = db1
        return dh

    dh, dw_head, db_head = layers.conv2d_backward(dlogits, caches["head"])
    grads["head.w"] = dw_head
    grads["head.b"] = db_head

    # decoder blocks ran for s = stages-1 .. 0, so undo them for s = 0 .. stages-1;
    # their caches sit at index stages-1-s
    dskips = [None] * cfg.stages
    for s in range(cfg.stages):
        dh = conv_block_backward(caches["dec"][cfg.stages - 1 - s], dh)
        c_up = dh.shape[1] - caches["skips"][s].shape[1]
        dskips[s] = dh[:, c_up:]
        dh = layers.upsample2_backward(dh[:, :c_up], caches["up"][cfg.stages - 1 - s])

    dh = conv_block_backward(caches["enc"][cfg.stages], dh)  # bottleneck
    for s in reversed(range(cfg.stages)):
        dh = layers.maxpool2_backward(dh, caches["pool"][s])
        dh = dh + dskips[s]
        dh = conv_block_backward(caches["enc"][s], dh)

    return float(loss), {k: np.asarray(v) for k, v in grads.items()}
