"""Batched forward and backward passes through the projection, temporal stack and heads.

Videos of different lengths are zero-padded to a common length and every layer's
output is re-masked, so each video sees exactly the zero padding that the
per-video :func:`~sceneseg.model.layers.dilated_conv` uses. The fusion stage is
not differentiated; its output is computed once per video and treated as input.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .config import ModelWeights
from .layers import layer_dilations, relu


def _outer(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Sum over batch and time of outer products: a (B, T, C), b (B, T, D) -> (C, D)."""
    return a.reshape(-1, a.shape[-1]).T @ b.reshape(-1, b.shape[-1])


def _shift(x: np.ndarray, k: int) -> np.ndarray:
    """y[:, t] = x[:, t + k] with zeros outside the sequence."""
    if k == 0:
        return x
    y = np.zeros_like(x)
    if k > 0:
        y[:, :-k] = x[:, k:]
    else:
        y[:, -k:] = x[:, :k]
    return y


def conv_batched(x: np.ndarray, kernel: np.ndarray, bias: np.ndarray, dilation: int) -> np.ndarray:
    """Centered kernel-3 convolution of a (B, T, C) batch."""
    return (_shift(x, -dilation) @ kernel[0] + x @ kernel[1] + _shift(x, dilation) @ kernel[2]) + bias


def conv_backward(x: np.ndarray, gz: np.ndarray, kernel: np.ndarray, dilation: int):
    """Gradients of :func:`conv_batched` w.r.t. kernel, bias and input."""
    taps = (_shift(x, -dilation), x, _shift(x, dilation))
    gk = np.stack([_outer(t, gz) for t in taps])
    gb = gz.sum(axis=(0, 1))
    gx = _shift(gz @ kernel[0].T, dilation) + gz @ kernel[1].T + _shift(gz @ kernel[2].T, -dilation)
    return gk, gb, gx


def pad_batch(seqs: list[np.ndarray]) -> tuple[np.ndarray, np.ndarray]:
    """Stack (T_i, D) arrays into (B, T_max, D) plus a (B, T_max, 1) validity mask."""
    T = max(s.shape[0] for s in seqs)
    out = np.zeros((len(seqs), T, seqs[0].shape[1]))
    mask = np.zeros((len(seqs), T, 1))
    for i, s in enumerate(seqs):
        out[i, : s.shape[0]] = s
        mask[i, : s.shape[0]] = 1.0
    return out, mask


def _diff(h: np.ndarray) -> np.ndarray:
    d = np.zeros_like(h)
    d[:, 1:] = h[:, 1:] - h[:, :-1]
    return d


@dataclass
class BatchForward:
    hidden: list[np.ndarray]           # per stage (B, T, C)
    diff: list[np.ndarray]
    label_logits: list[np.ndarray]     # per stage (B, T, classes)
    boundary_logits: list[np.ndarray]  # per stage (B, T)
    offset_pre: list[np.ndarray]       # per stage (B, T), before tanh
    cache: list                        # per layer (h_in, z, r) in forward order
    x: np.ndarray
    mask: np.ndarray


def forward_batched(x: np.ndarray, mask: np.ndarray, w: ModelWeights) -> BatchForward:
    cfg = w.config
    h = (x @ w["proj.w"] + w["proj.b"]) * mask
    cache = []
    hidden, diff, cls, bnd, off = [], [], [], [], []
    for s in range(cfg.stages):
        for l, dil in enumerate(layer_dilations(cfg, s)):
            p = f"stage{s}.layer{l}"
            z = conv_batched(h, w[p + ".conv_a.w"], w[p + ".conv_a.b"], dil[0])
            if s == 0:
                z = z + conv_batched(h, w[p + ".conv_b.w"], w[p + ".conv_b.b"], dil[1])
            r = relu(z)
            cache.append((h, z, r))
            h = (h + r @ w[p + ".out.w"] + w[p + ".out.b"]) * mask
        d = _diff(h)
        p = f"stage{s}"
        hidden.append(h)
        diff.append(d)
        cls.append(h @ w[p + ".head_cls.w"] + w[p + ".head_cls.b"])
        bnd.append((d @ w[p + ".head_bnd.w"] + w[p + ".head_bnd.b"])[..., 0])
        off.append((d @ w[p + ".head_off.w"] + w[p + ".head_off.b"])[..., 0])
    return BatchForward(hidden, diff, cls, bnd, off, cache, x, mask)


def backward_batched(fw: BatchForward, w: ModelWeights, g_cls: list[np.ndarray], g_bnd: list[np.ndarray],
                     g_off_pre: list[np.ndarray], heads_only: bool = False) -> dict[str, np.ndarray]:
    """Parameter gradients given loss gradients w.r.t. every stage's head outputs.

    With `heads_only` the temporal stack and projection are left out.
    """
    cfg = w.config
    grads: dict[str, np.ndarray] = {}
    g_next = None  # gradient flowing into the current stage's output from later stages
    layer_idx = len(fw.cache)
    for s in reversed(range(cfg.stages)):
        p = f"stage{s}"
        h, d = fw.hidden[s], fw.diff[s]
        grads[p + ".head_cls.w"] = _outer(h, g_cls[s])
        grads[p + ".head_cls.b"] = g_cls[s].sum(axis=(0, 1))
        grads[p + ".head_bnd.w"] = _outer(d, g_bnd[s][..., None])
        grads[p + ".head_bnd.b"] = np.atleast_1d(g_bnd[s].sum())
        grads[p + ".head_off.w"] = _outer(d, g_off_pre[s][..., None])
        grads[p + ".head_off.b"] = np.atleast_1d(g_off_pre[s].sum())
        if heads_only:
            continue
        gd = g_bnd[s][..., None] * w[p + ".head_bnd.w"][:, 0] + g_off_pre[s][..., None] * w[p + ".head_off.w"][:, 0]
        gh = g_cls[s] @ w[p + ".head_cls.w"].T
        gh[:, 1:] += gd[:, 1:]
        gh[:, :-1] -= gd[:, 1:]
        if g_next is not None:
            gh = gh + g_next
        dils = layer_dilations(cfg, s)
        for l in reversed(range(len(dils))):
            layer_idx -= 1
            h_in, z, r = fw.cache[layer_idx]
            q = f"stage{s}.layer{l}"
            g = gh * fw.mask
            grads[q + ".out.w"] = _outer(r, g)
            grads[q + ".out.b"] = g.sum(axis=(0, 1))
            gz = (g @ w[q + ".out.w"].T) * (z > 0)
            gk, gb, gx = conv_backward(h_in, gz, w[q + ".conv_a.w"], dils[l][0])
            grads[q + ".conv_a.w"], grads[q + ".conv_a.b"] = gk, gb
            gh = g + gx
            if s == 0:
                gk, gb, gx = conv_backward(h_in, gz, w[q + ".conv_b.w"], dils[l][1])
                grads[q + ".conv_b.w"], grads[q + ".conv_b.b"] = gk, gb
                gh = gh + gx
        g_next = gh
    if not heads_only:
        g0 = g_next * fw.mask
        grads["proj.w"] = _outer(fw.x, g0)
        grads["proj.b"] = g0.sum(axis=(0, 1))
    return grads
