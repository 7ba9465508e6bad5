"""Small random evaluation instances on a 0.01 s grid, sized for the exact oracles."""

from __future__ import annotations

import numpy as np

from sceneseg.annotation_io import DatasetSplit
from sceneseg.core import PredictedScene, PredictedSceneSet, internal_boundaries, make_annotation
from sceneseg.metrics import (
    F1_DISTANCES,
    TIOU_THRESHOLDS,
    class_detections,
    class_ground_truth,
    oracle_ap,
    oracle_f1,
    prf,
)


def _grid(x: float) -> float:
    return round(round(x * 100) / 100, 2)


def random_instance(rng: np.random.Generator, num_classes: int = 5, max_videos: int = 5, max_scenes: int = 6,
                    max_det_per_class: int = 8):
    """A ground-truth split and jittered, sparsely scored predictions."""
    n_videos = int(rng.integers(1, max_videos + 1))
    anns, preds = [], []
    det_count = np.zeros(num_classes, dtype=int)
    for v in range(n_videos):
        duration = _grid(rng.uniform(5, 20))
        k = int(rng.integers(1, max_scenes + 1))
        cuts = sorted({_grid(x) for x in rng.uniform(0.5, duration - 0.5, k - 1)})
        labels = [set(rng.choice(num_classes, size=int(rng.integers(1, 3)), replace=False).tolist())
                  for _ in range(len(cuts) + 1)]
        ann = make_annotation(f"v{v}", cuts, labels, duration)
        anns.append(ann)

        # predictions: jitter, drop or add cuts
        pcuts = [_grid(c + rng.choice([0.0, 0.05, -0.1, 0.2, 0.6]) * rng.choice([1, -1])) for c in cuts
                 if rng.random() > 0.2]
        pcuts += [_grid(x) for x in rng.uniform(0.5, duration - 0.5, int(rng.integers(0, 2)))]
        pcuts = sorted({c for c in pcuts if 0 < c < duration})
        edges = [0.0, *pcuts, duration]
        segs = []
        for a, b in zip(edges, edges[1:]):
            scores = {}
            for c in rng.choice(num_classes, size=int(rng.integers(0, 3)), replace=False):
                if det_count[c] < max_det_per_class:
                    scores[int(c)] = float(rng.choice([0.3, 0.5, 0.5, 0.8, 1.0]))
                    det_count[c] += 1
            segs.append(PredictedScene(a, b, scores))
        preds.append(PredictedSceneSet(ann.video_id, tuple(segs)))
    return DatasetSplit("test", tuple(anns)), preds


def oracle_avg_map(gt: DatasetSplit, preds, num_classes: int) -> float:
    per_tiou = []
    for thr in TIOU_THRESHOLDS:
        aps = [oracle_ap(class_detections(preds, c), class_ground_truth(gt, c), thr) for c in range(num_classes)]
        aps = [a for a in aps if a is not None]
        per_tiou.append(sum(aps) / len(aps))
    return sum(per_tiou) / len(per_tiou)


def oracle_avg_f1(gt: DatasetSplit, preds) -> float:
    by_id = {p.video_id: p.boundaries() for p in preds}
    f1s = []
    for t in F1_DISTANCES:
        tp = fp = fn = 0
        for a in gt.annotations:
            x, y, z = oracle_f1(by_id.get(a.video_id, []), internal_boundaries(a), t)
            tp, fp, fn = tp + x, fp + y, fn + z
        # no boundaries on either side counts as perfect agreement
        f1s.append(1.0 if tp + fp + fn == 0 else prf(tp, fp, fn)[2])
    return sum(f1s) / len(f1s)


def numeric_grad(f, x: np.ndarray, h: float = 1e-6) -> np.ndarray:
    """Central finite differences of a scalar function."""
    g = np.zeros_like(x)
    for i in np.ndindex(x.shape):
        orig = x[i]
        x[i] = orig + h
        up = f(x)
        x[i] = orig - h
        down = f(x)
        x[i] = orig
        g[i] = (up - down) / (2 * h)
    return g


def rel_err(a: np.ndarray, b: np.ndarray) -> float:
    return float(np.linalg.norm(a - b) / max(np.linalg.norm(a), np.linalg.norm(b), 1e-12))


def loss_gradcheck_points(rng: np.random.Generator, n: int = 100):
    """(name, worst relative error) over `n` random points for BCE, smooth-L1 and ASL.

    Points within 1e-4 of a loss kink (|x| = beta for smooth-L1, p = margin for ASL)
    are redrawn, since central differences are not meaningful across a kink.
    """
    from sceneseg.model.layers import sigmoid
    from sceneseg.model.losses import loss_asl, loss_boundary_bce, loss_offset_smooth_l1

    worst = {"bce": 0.0, "smooth_l1": 0.0, "asl": 0.0}
    for _ in range(n):
        z = rng.normal(0, 3, 6)
        y = (rng.random(6) < 0.4).astype(float)
        pw = float(rng.uniform(0.5, 5))
        _, g = loss_boundary_bce(z, y, pos_weight=pw)
        worst["bce"] = max(worst["bce"], rel_err(g, numeric_grad(lambda v: loss_boundary_bce(v, y, pw)[0], z.copy())))

        t = rng.normal(0, 1, 6)
        while True:
            p = rng.normal(0, 2, 6)
            if np.all(np.abs(np.abs(p - t) - 1.0) > 1e-4):
                break
        _, g = loss_offset_smooth_l1(p, t)
        worst["smooth_l1"] = max(worst["smooth_l1"],
                                 rel_err(g, numeric_grad(lambda v: loss_offset_smooth_l1(v, t)[0], p.copy())))

        gp, gn, m = float(rng.uniform(0, 2)), float(rng.uniform(0, 5)), float(rng.uniform(0, 0.2))
        while True:
            z = rng.normal(0, 3, (3, 4))
            if np.all(np.abs(sigmoid(z) - m) > 1e-4):
                break
        y = (rng.random((3, 4)) < 0.4).astype(float)
        _, g = loss_asl(z, y, gp, gn, m)
        worst["asl"] = max(worst["asl"], rel_err(g, numeric_grad(lambda v: loss_asl(v, y, gp, gn, m)[0], z.copy())))
    return worst


def asl_reduces_to_bce_bitwise(rng: np.random.Generator, n: int = 100) -> bool:
    from sceneseg.model.losses import loss_asl, loss_boundary_bce

    for _ in range(n):
        z = rng.normal(0, 4, (5, 7))
        y = (rng.random((5, 7)) < 0.5).astype(float)
        la, ga = loss_asl(z, y, 0.0, 0.0, 0.0)
        lb, gb = loss_boundary_bce(z, y)
        if la != lb or not np.array_equal(ga, gb):
            return False
    return True
