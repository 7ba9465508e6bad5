"""Training losses with analytic gradients with respect to their inputs.

Every function returns ``(loss, grad)``.
"""

from __future__ import annotations

from typing import Sequence

import numpy as np

from .layers import sigmoid
from .targets import RasterTargets


def softplus(z: np.ndarray) -> np.ndarray:
    return np.logaddexp(0.0, z)


def loss_boundary_bce(logits: np.ndarray, target01: np.ndarray, pos_weight: float = 1.0):
    """Mean binary cross-entropy with logits, in softplus form."""
    z = np.asarray(logits, dtype=float)
    y = np.asarray(target01, dtype=float)
    elem = pos_weight * y * softplus(-z) + (1 - y) * softplus(z)
    p = sigmoid(z)
    grad = (pos_weight * y * (p - 1) + (1 - y) * p) / z.size
    return float(np.mean(elem)), grad


def loss_offset_smooth_l1(pred: np.ndarray, target: np.ndarray, beta: float = 1.0):
    """Mean smooth-L1 over the given elements (boundary-positive samples); 0 when empty."""
    x = np.asarray(pred, dtype=float) - np.asarray(target, dtype=float)
    if x.size == 0:
        return 0.0, np.zeros_like(x)
    a = np.abs(x)
    elem = np.where(a < beta, 0.5 * x * x / beta, a - 0.5 * beta)
    grad = np.where(a < beta, x / beta, np.sign(x)) / x.size
    return float(np.mean(elem)), grad


def asl_elementwise(logits: np.ndarray, targets: np.ndarray, gamma_pos: float = 0.0, gamma_neg: float = 4.0,
                    margin: float = 0.05):
    """Per-element asymmetric loss and its per-element derivative (not averaged)."""
    z = np.asarray(logits, dtype=float)
    y = np.asarray(targets, dtype=float)
    p = sigmoid(z)
    q = sigmoid(-z)                 # 1 - p without cancellation
    log_p = -softplus(-z)
    if margin == 0:
        pm = p
        log_1m = -softplus(z)
        one_minus_pm = q
    else:
        pm = np.maximum(p - margin, 0.0)
        one_minus_pm = 1.0 - pm
        log_1m = np.log1p(-pm)
    w_pos = q ** gamma_pos if gamma_pos else 1.0
    w_neg = pm ** gamma_neg if gamma_neg else 1.0
    elem = y * -log_p * w_pos + (1 - y) * -log_1m * w_neg

    # d/dz of the positive term: (1-p)^g [g p log p - (1-p)]
    g_pos = w_pos * (gamma_pos * p * log_p - q)
    # d/dz of the negative term: p(1-p) [p_m^g / (1-p_m) - g p_m^(g-1) log(1-p_m)], zero where p <= margin
    active = pm > 0
    safe_pm = np.where(active, pm, 1.0)
    focal_term = gamma_neg * safe_pm ** (gamma_neg - 1) * log_1m if gamma_neg else 0.0
    g_neg = np.where(active, p * q * (w_neg / one_minus_pm - focal_term), 0.0)
    if margin == 0 and not gamma_neg:
        g_neg = p
    return elem, y * g_pos + (1 - y) * g_neg


def loss_asl(logits: np.ndarray, targets: np.ndarray, gamma_pos: float = 0.0, gamma_neg: float = 4.0,
             margin: float = 0.05):
    """Asymmetric loss for multi-label classification, averaged over all elements.

    Positives: -(1-p)^gamma_pos * log p. Negatives: -p_m^gamma_neg * log(1 - p_m)
    with the shifted probability p_m = max(p - margin, 0). With both gammas and the
    margin at zero this is exactly the mean binary cross-entropy.
    """
    if gamma_pos == 0 and gamma_neg == 0 and margin == 0:
        return loss_boundary_bce(logits, targets)
    elem, g = asl_elementwise(logits, targets, gamma_pos, gamma_neg, margin)
    return float(np.mean(elem)), g / elem.size


def _pool_max(logits: np.ndarray, groups: np.ndarray, n_groups: int):
    """Per-group column max and the row index attaining it."""
    C = logits.shape[1]
    pooled = np.full((n_groups, C), -np.inf)
    arg = np.zeros((n_groups, C), dtype=int)
    for g in range(n_groups):
        idx = np.flatnonzero(groups == g)
        if idx.size:
            block = logits[idx]
            a = block.argmax(axis=0)
            pooled[g] = block[a, np.arange(C)]
            arg[g] = idx[a]
    return pooled, arg


def loss_multiscale(label_logits: np.ndarray | Sequence[np.ndarray], targets: RasterTargets,
                    weights: tuple[float, float, float] = (1.0, 1.0, 1.0), **asl_kwargs):
    """Frame-, scene- and video-level ASL on max-pooled class logits.

    Pooling the logits is equivalent to pooling probabilities because the sigmoid is
    monotone. A list of per-stage logits is summed (deep supervision); the gradient
    is then a list in the same order.
    """
    if isinstance(label_logits, (list, tuple)):
        parts = [loss_multiscale(x, targets, weights, **asl_kwargs) for x in label_logits]
        return float(sum(l for l, _ in parts)), [g for _, g in parts]
    z = np.asarray(label_logits, dtype=float)
    T, C = z.shape
    wf, ws, wv = weights
    grad = np.zeros_like(z)

    lf, gf = loss_asl(z, targets.frame_labels, **asl_kwargs)
    grad += wf * gf

    S = targets.scene_labels.shape[0]
    pooled, arg = _pool_max(z, targets.scene_index, S)
    present = np.isfinite(pooled[:, 0])
    ls, gs = loss_asl(pooled[present], targets.scene_labels[present], **asl_kwargs)
    np.add.at(grad, (arg[present], np.broadcast_to(np.arange(C), arg[present].shape)), ws * gs)

    vmax = z.argmax(axis=0)
    lv, gv = loss_asl(z[vmax, np.arange(C)][None, :], targets.video_labels[None, :], **asl_kwargs)
    np.add.at(grad, (vmax, np.arange(C)), wv * gv[0])
    return float(wf * lf + ws * ls + wv * lv), grad
