"""Fit network weights on annotated feature bundles by gradient descent.

The fusion layers keep their seeded initialization; the projection, the temporal
stack and every stage's heads are updated with Adam steps (or only the heads with
``heads_only``). All stages are supervised. The classification term is the mean
over videos of :func:`~sceneseg.model.losses.loss_multiscale`, computed for the
whole batch at once. Each step uses every video, or a seeded random mini-batch
when ``batch_size`` is set.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from ..core import VideoAnnotation
from .backprop import backward_batched, forward_batched, pad_batch
from .config import FeatureBundle, ModelWeights
from .layers import fuse
from .losses import asl_elementwise, loss_boundary_bce, loss_offset_smooth_l1
from .targets import RasterTargets, rasterize_targets

log = logging.getLogger(__name__)


@dataclass
class FitConfig:
    steps: int = 600
    lr: float = 3e-3                  # peak rate, decayed to zero on a cosine schedule
    beta1: float = 0.9
    beta2: float = 0.999
    pos_weight: float = 4.0
    weight_decay: float = 0.0         # decoupled, applied to weight matrices only
    head_weights: tuple[float, float, float] = (1.0, 1.0, 1.0)   # classification, boundary, offset
    heads_only: bool = False
    batch_size: int | None = None     # videos per step; None uses all of them
    seed: int = 0                     # mini-batch sampling
    log_every: int = 100


@dataclass
class FitHistory:
    cls_loss: list[float] = field(default_factory=list)
    bnd_loss: list[float] = field(default_factory=list)
    off_loss: list[float] = field(default_factory=list)


class MultiscaleBatch:
    """Mean over videos of the multi-scale classification loss, for a padded batch.

    Scenes occupy contiguous runs of samples, so per-scene and per-video maxima
    reduce to ``reduceat`` over the valid rows laid end to end.
    """

    def __init__(self, targets: Sequence[RasterTargets], mask: np.ndarray,
                 weights: tuple[float, float, float] = (1.0, 1.0, 1.0), **asl_kwargs):
        self.valid = mask[..., 0] > 0
        self.asl_kwargs = asl_kwargs
        B = len(targets)
        C = targets[0].frame_labels.shape[1]
        wf, ws, wv = weights
        self.frame_y = np.concatenate([t.frame_labels for t in targets])
        row_w, scene_starts, scene_y, scene_w, video_starts = [], [], [], [], []
        offset = 0
        for t in targets:
            T = t.frame_labels.shape[0]
            row_w.append(np.full(T, wf / (B * T * C)))
            idx = t.scene_index
            starts = np.flatnonzero(np.r_[True, idx[1:] != idx[:-1]])
            scene_starts.extend(offset + starts)
            scene_y.append(t.scene_labels[idx[starts]])
            scene_w.append(np.full(starts.size, ws / (B * starts.size * C)))
            video_starts.append(offset)
            offset += T
        self.n_rows = offset
        self.row_w = np.concatenate(row_w)[:, None]
        self.scene_starts = np.array(scene_starts)
        self.scene_y = np.concatenate(scene_y)
        self.scene_w = np.concatenate(scene_w)[:, None]
        self.video_starts = np.array(video_starts)
        self.video_y = np.stack([t.video_labels for t in targets])
        self.video_w = wv / (B * C)

    def _pooled(self, z: np.ndarray, starts: np.ndarray):
        pooled = np.maximum.reduceat(z, starts, axis=0)
        seg = np.cumsum(np.isin(np.arange(z.shape[0]), starts)) - 1
        rows = np.where(z == pooled[seg], np.arange(z.shape[0])[:, None], z.shape[0])
        return pooled, np.minimum.reduceat(rows, starts, axis=0)

    def __call__(self, logits: np.ndarray):
        z = logits[self.valid]
        C = z.shape[1]
        cols = np.broadcast_to(np.arange(C), z.shape)
        ef, gf = asl_elementwise(z, self.frame_y, **self.asl_kwargs)
        loss = float(np.sum(ef * self.row_w))
        g = gf * self.row_w
        for starts, y, w in ((self.scene_starts, self.scene_y, self.scene_w),
                             (self.video_starts, self.video_y, self.video_w)):
            pooled, arg = self._pooled(z, starts)
            e, gp = asl_elementwise(pooled, y, **self.asl_kwargs)
            loss += float(np.sum(e * w))
            np.add.at(g, (arg, cols[: arg.shape[0]]), gp * w)
        out = np.zeros_like(logits)
        out[self.valid] = g
        return loss, out


class _Batch:
    """Padded inputs and targets for a set of videos."""

    def __init__(self, xs: Sequence[np.ndarray], tgts: Sequence[RasterTargets], half: float):
        self.x, self.mask = pad_batch(list(xs))
        self.y_bnd = pad_batch([t.boundary_01[:, None] for t in tgts])[0][..., 0]
        self.y_off = pad_batch([t.offsets_s[:, None] for t in tgts])[0][..., 0] / half
        self.valid = self.mask[..., 0] > 0
        self.pos = (self.y_bnd > 0) & self.valid
        self.cls_loss = MultiscaleBatch(tgts, self.mask)


def _adam(cfg: FitConfig, params: dict, grads: dict, state: dict, it: int) -> None:
    lr = cfg.lr * 0.5 * (1 + np.cos(np.pi * (it - 1) / cfg.steps))
    for k, g in grads.items():
        m, v = state.get(k, (0.0, 0.0))
        m = cfg.beta1 * m + (1 - cfg.beta1) * g
        v = cfg.beta2 * v + (1 - cfg.beta2) * g * g
        state[k] = (m, v)
        mh = m / (1 - cfg.beta1 ** it)
        vh = v / (1 - cfg.beta2 ** it)
        params[k] = params[k] - lr * mh / (np.sqrt(vh) + 1e-8)
        if cfg.weight_decay and k.endswith(".w"):
            params[k] = params[k] * (1 - lr * cfg.weight_decay)


def fit(weights: ModelWeights, bundles: Sequence[FeatureBundle], annotations: Sequence[VideoAnnotation],
        cfg: FitConfig | None = None) -> tuple[ModelWeights, FitHistory]:
    """Return fitted weights (rounded to float32, as they are stored) and the loss history."""
    cfg = cfg or FitConfig()
    mc = weights.config
    if len(bundles) != len(annotations) or not bundles:
        raise ValueError("need one annotation per bundle and at least one video")
    fps = bundles[0].fps
    half = 0.5 / fps
    w = weights.copy()
    xs = [fuse(b.frame, b.audio, b.text, w) for b in bundles]
    tgts = [rasterize_targets(a, b.fps, mc.num_classes) for a, b in zip(annotations, bundles)]
    n = len(bundles)
    full = None if cfg.batch_size and cfg.batch_size < n else _Batch(xs, tgts, half)
    rng = np.random.default_rng(cfg.seed)
    order: list[int] = []
    wc, wb, wo = cfg.head_weights
    hist = FitHistory()
    state: dict = {}

    for it in range(1, cfg.steps + 1):
        if full is None:
            if len(order) < cfg.batch_size:
                order += rng.permutation(n).tolist()
            pick, order = order[: cfg.batch_size], order[cfg.batch_size:]
            batch = _Batch([xs[i] for i in pick], [tgts[i] for i in pick], half)
        else:
            batch = full
        valid, pos = batch.valid, batch.pos
        fw = forward_batched(batch.x, batch.mask, w)
        g_cls, g_bnd, g_off = [], [], []
        totals = np.zeros(3)
        for s in range(mc.stages):
            lc, gc = batch.cls_loss(fw.label_logits[s])
            g_cls.append(wc * gc)

            lb, gz = loss_boundary_bce(fw.boundary_logits[s][valid], batch.y_bnd[valid], pos_weight=cfg.pos_weight)
            gb = np.zeros_like(batch.y_bnd)
            gb[valid] = wb * gz
            g_bnd.append(gb)

            # offsets are regressed in units of half a sample period
            u = np.tanh(fw.offset_pre[s][pos])
            lo, gu = loss_offset_smooth_l1(u, batch.y_off[pos])
            go = np.zeros_like(batch.y_bnd)
            go[pos] = wo * gu * (1 - u * u)
            g_off.append(go)
            totals += (lc, lb, lo)

        grads = backward_batched(fw, w, g_cls, g_bnd, g_off, heads_only=cfg.heads_only)
        _adam(cfg, w.params, grads, state, it)
        hist.cls_loss.append(float(totals[0]))
        hist.bnd_loss.append(float(totals[1]))
        hist.off_loss.append(float(totals[2]))
        if cfg.log_every and it % cfg.log_every == 0:
            log.info("step %d: cls %.4f bnd %.4f off %.5f", it, *totals)
    return w.round_to_float32(), hist
