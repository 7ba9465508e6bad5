"""Avg_mAP over tIoU 0.50:0.95 and Avg_F1 over boundary distances 0.1:0.5 s.

Threshold comparisons are inclusive. Times arrive as decimal seconds, so every
comparison against a threshold allows ``CMP_EPS`` of binary rounding slack;
distinct decimal inputs on a millisecond grid never fall inside that slack.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, Mapping, Sequence

import numpy as np

from .annotation_io import DatasetSplit
from .core import PredictedSceneSet, SceneSegError, Taxonomy, internal_boundaries, tiou

TIOU_THRESHOLDS = tuple(round(0.5 + 0.05 * i, 2) for i in range(10))
F1_DISTANCES = (0.1, 0.2, 0.3, 0.4, 0.5)
CMP_EPS = 1e-9
REPORT_SCHEMA_VERSION = 1

# (video_id, start, end, score)
Detection = tuple[str, float, float, float]


class UnknownVideoError(SceneSegError, KeyError):
    pass


class OracleRefused(SceneSegError, ValueError):
    pass


# ---------------------------------------------------------------------------
# mAP


def rank_detections(preds: Iterable[Detection]) -> list[Detection]:
    """Score descending; ties by earlier start, then video id."""
    return sorted(preds, key=lambda d: (-d[3], d[1], d[0]))


def _match_ranked(ranked: Sequence[Detection], gts: Mapping[str, Sequence[tuple[float, float]]],
                  thresholds: Sequence[float]) -> np.ndarray:
    """TP flags, shape (len(thresholds), len(ranked))."""
    ious = []
    for vid, s, e, _ in ranked:
        g = gts.get(vid, ())
        ious.append(np.array([tiou((s, e), iv) for iv in g]))
    tp = np.zeros((len(thresholds), len(ranked)), dtype=bool)
    for ti, thr in enumerate(thresholds):
        claimed = {vid: np.zeros(len(g), dtype=bool) for vid, g in gts.items()}
        for k, (vid, *_rest) in enumerate(ranked):
            iou = ious[k]
            if iou.size == 0:
                continue
            free = np.where(claimed[vid], -1.0, iou)
            j = int(np.argmax(free))  # first index wins ties
            if not claimed[vid][j] and free[j] >= thr - CMP_EPS:
                claimed[vid][j] = True
                tp[ti, k] = True
    return tp


def _ap_from_flags(tp: np.ndarray, n_gt: int) -> float:
    if tp.size == 0:
        return 0.0
    cum = np.cumsum(tp)
    precision = cum / np.arange(1, tp.size + 1)
    return float(np.sum(precision[tp]) / n_gt)


def ap_single_class(preds: Iterable[Detection], gts: Mapping[str, Sequence[tuple[float, float]]],
                    tiou_thr: float) -> float | None:
    """Un-interpolated average precision of one class at one tIoU threshold.

    `gts` maps video id to that class's ground-truth intervals. Each detection, in
    ranked order, claims the highest-tIoU unclaimed ground truth of its video if
    that tIoU reaches the threshold. Returns None when the class has no ground truth.
    """
    n_gt = sum(len(g) for g in gts.values())
    if n_gt == 0:
        return None
    ranked = rank_detections(preds)
    return _ap_from_flags(_match_ranked(ranked, gts, [tiou_thr])[0], n_gt)


@dataclass
class MapResult:
    per_class_per_tiou: np.ndarray          # (N, len(thresholds)), NaN for skipped classes
    map_at_tiou: np.ndarray
    avg_map: float
    thresholds: tuple[float, ...] = TIOU_THRESHOLDS
    skipped_classes: list[int] = field(default_factory=list)


def class_detections(preds: Iterable[PredictedSceneSet], class_id: int) -> list[Detection]:
    return [(p.video_id, s.start_s, s.end_s, s.score(class_id))
            for p in preds for s in p.segments if s.score(class_id) > 0]


def class_ground_truth(gt: DatasetSplit, class_id: int) -> dict[str, list[tuple[float, float]]]:
    return {a.video_id: [(s.start_s, s.end_s) for s in a.scenes if class_id in s.labels] for a in gt.annotations}


def _check_videos(gt: DatasetSplit, preds: Sequence[PredictedSceneSet]) -> None:
    known = {a.video_id for a in gt.annotations}
    unknown = sorted({p.video_id for p in preds} - known)
    if unknown:
        raise UnknownVideoError(f"predictions reference videos absent from ground truth: {unknown}")


def avg_map(gt: DatasetSplit, preds: Sequence[PredictedSceneSet], tax: Taxonomy,
            thresholds: Sequence[float] = TIOU_THRESHOLDS) -> MapResult:
    preds = list(preds)
    _check_videos(gt, preds)
    table = np.full((tax.num_classes, len(thresholds)), np.nan)
    skipped = []
    for c in range(tax.num_classes):
        gts = class_ground_truth(gt, c)
        n_gt = sum(len(g) for g in gts.values())
        if n_gt == 0:
            skipped.append(c)
            continue
        ranked = rank_detections(class_detections(preds, c))
        flags = _match_ranked(ranked, gts, thresholds)
        table[c] = [_ap_from_flags(f, n_gt) for f in flags]
    scored = table[~np.isnan(table[:, 0])]
    map_at = scored.mean(axis=0) if len(scored) else np.zeros(len(thresholds))
    return MapResult(table, map_at, float(map_at.mean()), tuple(thresholds), skipped)


# ---------------------------------------------------------------------------
# boundary F1


def boundary_match(pred_b: Sequence[float], gt_b: Sequence[float], t: float,
                   strategy: str = "ordered") -> tuple[int, int, int]:
    """Claim-and-delete boundary matching within one video; returns (TP, FP, FN).

    ``ordered``: predictions in ascending time each take the nearest unclaimed
    ground truth (earlier wins ties) and count as TP when it lies within `t`.
    ``nearest-pair``: pairs are matched globally in order of increasing distance.
    """
    pred = sorted(pred_b)
    gt = sorted(gt_b)
    if strategy == "ordered":
        free = list(gt)
        tp = 0
        for p in pred:
            if not free:
                continue
            j = min(range(len(free)), key=lambda i: (abs(free[i] - p), i))
            if abs(free[j] - p) <= t + CMP_EPS:
                tp += 1
                del free[j]
    elif strategy == "nearest-pair":
        pairs = sorted((abs(g - p), i, j) for i, p in enumerate(pred) for j, g in enumerate(gt)
                       if abs(g - p) <= t + CMP_EPS)
        used_p, used_g = set(), set()
        for _, i, j in pairs:
            if i not in used_p and j not in used_g:
                used_p.add(i)
                used_g.add(j)
        tp = len(used_p)
    else:
        raise ValueError(f"unknown matching strategy {strategy!r}")
    return tp, len(pred) - tp, len(gt) - tp


def prf(tp: int, fp: int, fn: int) -> tuple[float, float, float]:
    precision = tp / (tp + fp) if tp + fp else 0.0
    recall = tp / (tp + fn) if tp + fn else 0.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
    return precision, recall, f1


@dataclass
class F1Result:
    per_t: list[dict]
    avg_f1: float
    vacuous: bool = False
    strategy: str = "ordered"


def avg_f1(gt: DatasetSplit, preds: Sequence[PredictedSceneSet], distances: Sequence[float] = F1_DISTANCES,
           strategy: str = "ordered") -> F1Result:
    """Micro-averaged boundary F1 at each distance, then their mean.

    Videos without predictions contribute only false negatives. With no ground-truth
    and no predicted boundaries anywhere, F1 is 1.0 and the result is flagged vacuous.
    """
    preds = list(preds)
    _check_videos(gt, preds)
    pred_by_id = {p.video_id: p.boundaries() for p in preds}
    pairs = [(pred_by_id.get(a.video_id, []), internal_boundaries(a)) for a in gt.annotations]
    vacuous = all(not p and not g for p, g in pairs)
    per_t = []
    for t in distances:
        tp = fp = fn = 0
        for p, g in pairs:
            a, b, c = boundary_match(p, g, t, strategy)
            tp, fp, fn = tp + a, fp + b, fn + c
        precision, recall, f1 = prf(tp, fp, fn)
        if vacuous:
            precision = recall = f1 = 1.0
        per_t.append({"t": t, "precision": precision, "recall": recall, "f1": f1, "tp": tp, "fp": fp, "fn": fn})
    return F1Result(per_t, float(np.mean([r["f1"] for r in per_t])), vacuous, strategy)


# ---------------------------------------------------------------------------
# oracles (exact rational arithmetic on the decimal values of the inputs)


def _q(x: float) -> Fraction:
    return Fraction(repr(float(x)))


def _exact_tiou(a, b) -> Fraction:
    inter = min(a[1], b[1]) - max(a[0], b[0])
    if inter <= 0:
        return Fraction(0)
    return inter / (max(a[1], b[1]) - min(a[0], b[0]))


def oracle_ap(preds: Iterable[Detection], gts: Mapping[str, Sequence[tuple[float, float]]], tiou_thr: float,
              max_detections: int = 8) -> float | None:
    """Reference AP: every prefix of the ranking is re-matched from scratch in exact arithmetic."""
    preds = list(preds)
    if len(preds) > max_detections:
        raise OracleRefused(f"{len(preds)} detections exceed the oracle limit of {max_detections}")
    thr = _q(tiou_thr)
    gq = {vid: [(_q(s), _q(e)) for s, e in ivs] for vid, ivs in gts.items()}
    n_gt = sum(len(v) for v in gq.values())
    if n_gt == 0:
        return None
    order = sorted(range(len(preds)), key=lambda i: (-_q(preds[i][3]), _q(preds[i][1]), preds[i][0]))
    ranked = [(preds[i][0], _q(preds[i][1]), _q(preds[i][2])) for i in order]

    def true_positives(prefix) -> int:
        taken = set()
        count = 0
        for vid, s, e in prefix:
            options = [(_exact_tiou((s, e), g), -j) for j, g in enumerate(gq.get(vid, [])) if (vid, j) not in taken]
            if not options:
                continue
            best, neg_j = max(options)
            if best >= thr:
                taken.add((vid, -neg_j))
                count += 1
        return count

    ap = Fraction(0)
    prev_recall = Fraction(0)
    for k in range(1, len(ranked) + 1):
        tp_k = true_positives(ranked[:k])
        recall = Fraction(tp_k, n_gt)
        ap += Fraction(tp_k, k) * (recall - prev_recall)
        prev_recall = recall
    return float(ap)


def oracle_f1(pred_b: Sequence[float], gt_b: Sequence[float], t: float,
              max_boundaries: int = 8) -> tuple[int, int, int]:
    """Reference claim-and-delete matching, one prediction at a time, in exact arithmetic."""
    if len(pred_b) > max_boundaries or len(gt_b) > max_boundaries:
        raise OracleRefused(f"instance with {len(pred_b)}/{len(gt_b)} boundaries exceeds {max_boundaries}")
    tq = _q(t)
    remaining = {j: _q(g) for j, g in enumerate(sorted(gt_b))}
    tp = fp = 0
    for p in sorted(_q(x) for x in pred_b):
        if not remaining:
            fp += 1
            continue
        dist = {j: abs(g - p) for j, g in remaining.items()}
        nearest = min(dist, key=lambda j: (dist[j], j))
        if dist[nearest] <= tq:
            tp += 1
            remaining.pop(nearest)
        else:
            fp += 1
    return tp, fp, len(remaining)


# ---------------------------------------------------------------------------
# reports


def evaluation_report(map_res: MapResult, f1_res: F1Result, tax: Taxonomy) -> dict:
    per_class = []
    for c in range(tax.num_classes):
        row = map_res.per_class_per_tiou[c]
        per_class.append({
            "class_id": c,
            "name": tax.classes[c].name,
            "skipped": bool(np.isnan(row[0])),
            "ap": None if np.isnan(row[0]) else [float(v) for v in row],
            "ap_mean": None if np.isnan(row[0]) else float(row.mean()),
        })
    return {
        "schema_version": REPORT_SCHEMA_VERSION,
        "avg_map": map_res.avg_map,
        "avg_f1": f1_res.avg_f1,
        "map_at_tiou": [{"tiou": t, "map": float(v)} for t, v in zip(map_res.thresholds, map_res.map_at_tiou)],
        "f1_at_t": f1_res.per_t,
        "f1_vacuous": f1_res.vacuous,
        "f1_strategy": f1_res.strategy,
        "skipped_classes": map_res.skipped_classes,
        "per_class": per_class,
    }


def report_json(report: dict) -> str:
    return json.dumps(report, indent=1, sort_keys=True) + "\n"


def report_csv(report: dict) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["section", "key", "value"])
    w.writerow(["summary", "avg_map", repr(report["avg_map"])])
    w.writerow(["summary", "avg_f1", repr(report["avg_f1"])])
    for r in report["map_at_tiou"]:
        w.writerow(["map_at_tiou", f"{r['tiou']:.2f}", repr(r["map"])])
    for r in report["f1_at_t"]:
        for k in ("precision", "recall", "f1", "tp", "fp", "fn"):
            w.writerow([f"f1_at_{r['t']:.1f}", k, repr(r[k])])
    for r in report["per_class"]:
        if not r["skipped"]:
            w.writerow(["class_ap", f"{r['class_id']}:{r['name']}", repr(r["ap_mean"])])
    return buf.getvalue()


def format_report(report: dict) -> str:
    lines = [f"Avg_mAP  {report['avg_map']:.4f}", f"Avg_F1   {report['avg_f1']:.4f}", "", "tIoU   mAP"]
    lines += [f"{r['tiou']:.2f}   {r['map']:.4f}" for r in report["map_at_tiou"]]
    lines += ["", "t(s)  precision  recall  F1      TP    FP    FN"]
    lines += [f"{r['t']:.1f}   {r['precision']:.4f}     {r['recall']:.4f}  {r['f1']:.4f}  "
              f"{r['tp']:<5d} {r['fp']:<5d} {r['fn']:<5d}" for r in report["f1_at_t"]]
    if report["f1_vacuous"]:
        lines.append("(no boundaries in ground truth or predictions: F1 is vacuous)")
    return "\n".join(lines) + "\n"


def evaluate(gt: DatasetSplit, preds: Sequence[PredictedSceneSet], tax: Taxonomy, strategy: str = "ordered") -> dict:
    return evaluation_report(avg_map(gt, preds, tax), avg_f1(gt, preds, strategy=strategy), tax)
