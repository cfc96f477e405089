"""Array building blocks for the segmentation net: forward and backward.

Everything is plain numpy with explicit reverse-mode passes. Convolutions go
through im2col so the heavy lifting lands in BLAS; bilinear upsampling is a
pair of fixed interpolation matrices, which makes its adjoint exact. All ops
work in float32 for training and float64 for gradient checking (dtype follows
the input).
"""

from __future__ import annotations

from functools import lru_cache

import numpy as np

from ..errors import ShapeMismatch


def _im2col(x: np.ndarray, kh: int, kw: int, pad: int) -> np.ndarray:
    """(B, C, H, W) -> (B, H*W, C*kh*kw) patch matrix, zero-padded SAME."""
    b, c, h, w = x.shape
    xp = np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad)))
    s = xp.strides
    windows = np.lib.stride_tricks.as_strided(
        xp,
        shape=(b, c, h, w, kh, kw),
        strides=(s[0], s[1], s[2], s[3], s[2], s[3]),
        writeable=False,
    )
    return np.ascontiguousarray(windows.transpose(0, 2, 3, 1, 4, 5)).reshape(
        b, h * w, c * kh * kw
    )


def conv2d_forward(x: np.ndarray, w: np.ndarray, bias: np.ndarray):
    """SAME convolution with odd square kernels, stride 1."""
    o, c, kh, kw = w.shape
    if x.shape[1] != c:
        raise ShapeMismatch(f"conv expects {c} input channels, got {x.shape[1]}")
    b, _, h, wd = x.shape
    cols = _im2col(x, kh, kw, (kh - 1) // 2)
    out = cols @ w.reshape(o, -1).T + bias
    out = out.transpose(0, 2, 1).reshape(b, o, h, wd)
    return out, (x, w)


def conv2d_backward(dout: np.ndarray, cache):
    x, w = cache
    o, c, kh, kw = w.shape
    b, _, h, wd = x.shape
    cols = _im2col(x, kh, kw, (kh - 1) // 2)
    dflat = dout.reshape(b, o, h * wd)
    dw = np.tensordot(dflat, cols, axes=([0, 2], [0, 1])).reshape(o, c, kh, kw)
    db = dout.sum(axis=(0, 2, 3))
    # input gradient is a SAME convolution with the flipped, transposed kernel
    w_t = np.ascontiguousarray(w.transpose(1, 0, 2, 3)[:, :, ::-1, ::-1])
    dx, _ = conv2d_forward(dout, w_t, np.zeros(c, dtype=dout.dtype))
    return dx, dw, db


def relu_forward(x: np.ndarray):
    out = np.maximum(x, 0)
    return out, x > 0


def relu_backward(dout: np.ndarray, mask: np.ndarray):
    return dout * mask


def maxpool2_forward(x: np.ndarray):
    """2x2 max pool, stride 2; spatial dims must be even. Ties pick the
    first element in scan order, so the pass is deterministic."""
    b, c, h, w = x.shape
    if h % 2 or w % 2:
        raise ShapeMismatch(f"maxpool needs even dims, got {h}x{w}")
    v = x.reshape(b, c, h // 2, 2, w // 2, 2).transpose(0, 1, 2, 4, 3, 5).reshape(
        b, c, h // 2, w // 2, 4
    )
    idx = v.argmax(axis=-1)
    out = np.take_along_axis(v, idx[..., None], axis=-1)[..., 0]
    return out, (idx, x.shape)


def maxpool2_backward(dout: np.ndarray, cache):
    idx, (b, c, h, w) = cache
    dv = np.zeros((b, c, h // 2, w // 2, 4), dtype=dout.dtype)
    np.put_along_axis(dv, idx[..., None], dout[..., None], axis=-1)
    return dv.reshape(b, c, h // 2, w // 2, 2, 2).transpose(0, 1, 2, 4, 3, 5).reshape(
        b, c, h, w
    )


@lru_cache(maxsize=64)
def _upsample_matrix(n_in: int) -> np.ndarray:
    """(2n x n) bilinear x2 interpolation matrix, edges clamped."""
    m = np.zeros((2 * n_in, n_in))
    src = (np.arange(2 * n_in) + 0.5) / 2.0 - 0.5
    i0 = np.floor(src).astype(int)
    frac = src - i0
    lo = np.clip(i0, 0, n_in - 1)
    hi = np.clip(i0 + 1, 0, n_in - 1)
    rows = np.arange(2 * n_in)
    np.add.at(m, (rows, lo), 1.0 - frac)
    np.add.at(m, (rows, hi), frac)
    return m


def upsample2_forward(x: np.ndarray):
    b, c, h, w = x.shape
    mr = _upsample_matrix(h).astype(x.dtype)
    mc = _upsample_matrix(w).astype(x.dtype)
    out = np.matmul(np.matmul(mr, x), mc.T)
    return out, (h, w)


def upsample2_backward(dout: np.ndarray, cache):
    h, w = cache
    mr = _upsample_matrix(h).astype(dout.dtype)
    mc = _upsample_matrix(w).astype(dout.dtype)
    return np.matmul(np.matmul(mr.T, dout), mc)


def softmax(logits: np.ndarray) -> np.ndarray:
    """Channel softmax over axis 1, numerically stable."""
    m = logits.max(axis=1, keepdims=True)
    e = np.exp(logits - m)
    return e / e.sum(axis=1, keepdims=True)


def softmax_ce_loss(
    logits: np.ndarray,
    labels: np.ndarray,
    valid: np.ndarray | None = None,
    class_weights: np.ndarray | None = None,
):
    """Mean per-pixel cross-entropy over valid pixels and its logit gradient.

    Returns (loss, dlogits, probabilities). With class weights the mean is
    weighted (sum w_i * ce_i / sum w_i). Zero valid pixels yield loss 0 and a
    zero gradient.
    """
    b, k, h, w = logits.shape
    if labels.shape != (b, h, w):
        raise ShapeMismatch(f"labels {labels.shape} do not match logits {logits.shape}")
    m = logits.max(axis=1, keepdims=True)
    shifted = logits - m
    lse = np.log(np.exp(shifted).sum(axis=1)) + m[:, 0]
    label_logit = np.take_along_axis(logits, labels[:, None].astype(np.int64), axis=1)[:, 0]
    ce = lse - label_logit  # (B, H, W)

    weight = np.ones_like(ce)
    if class_weights is not None:
        weight = np.asarray(class_weights, dtype=logits.dtype)[labels]
    if valid is not None:
        weight = weight * valid
    wsum = weight.sum()
    if wsum == 0:
        return np.asarray(0.0, dtype=logits.dtype), np.zeros_like(logits), softmax(logits)

    probs = softmax(logits)
    onehot = np.zeros_like(logits)
    np.put_along_axis(onehot, labels[:, None].astype(np.int64), 1.0, axis=1)
    dlogits = (probs - onehot) * (weight / wsum)[:, None]
    loss = (weight * ce).sum() / wsum
    return loss, dlogits, probs
