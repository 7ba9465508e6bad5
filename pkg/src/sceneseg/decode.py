"""Turn per-sample model outputs into scene predictions."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .annotation_io import ParseError, read_container, write_container
from .core import PredictedScene, PredictedSceneSet, SceneSegError

log = logging.getLogger(__name__)

OUTPUTS_TAG = "outputs"


def num_samples(duration_s: float, fps: float) -> int:
    """Samples at times k/fps covering [0, duration)."""
    return int(math.ceil(round(duration_s * fps, 9)))


@dataclass
class FrameOutputs:
    fps: float
    label_scores: np.ndarray    # (T, C) in [0, 1]
    boundary_prob: np.ndarray   # (T,) in [0, 1]
    offsets_s: np.ndarray       # (T,) seconds from the sample time to the boundary
    duration_s: float

    def __post_init__(self):
        self.label_scores = np.atleast_2d(np.asarray(self.label_scores, dtype=float))
        self.boundary_prob = np.asarray(self.boundary_prob, dtype=float).ravel()
        self.offsets_s = np.asarray(self.offsets_s, dtype=float).ravel()
        T = num_samples(self.duration_s, self.fps)
        if not (self.label_scores.shape[0] == self.boundary_prob.shape[0] == self.offsets_s.shape[0] == T):
            raise ValueError(f"expected T = ceil(duration * fps) = {T} samples, got label_scores "
                             f"{self.label_scores.shape}, boundary_prob {self.boundary_prob.shape}, "
                             f"offsets {self.offsets_s.shape}")
        for name in ("label_scores", "boundary_prob", "offsets_s"):
            if not np.all(np.isfinite(getattr(self, name))):
                raise ValueError(f"{name} contains non-finite values")

    @property
    def T(self) -> int:
        return self.boundary_prob.shape[0]

    @property
    def num_classes(self) -> int:
        return self.label_scores.shape[1]

    def times(self) -> np.ndarray:
        return np.arange(self.T) / self.fps


def write_frame_outputs(path: str | Path, out: FrameOutputs) -> None:
    write_container(path, OUTPUTS_TAG, [out.label_scores, out.boundary_prob, out.offsets_s], out.fps, out.duration_s)


def read_frame_outputs(path: str | Path) -> FrameOutputs:
    c = read_container(path, [None, 1, 1])
    if c.tag != OUTPUTS_TAG:
        raise ParseError(f"{path}: expected tag {OUTPUTS_TAG!r}, found {c.tag!r}")
    scores = c.blocks[0]
    if scores.ndim == 1:
        scores = scores[:, None]
    try:
        return FrameOutputs(c.fps, scores, c.blocks[1].ravel(), c.blocks[2].ravel(), c.duration_s)
    except ValueError as e:
        raise ParseError(f"{path}: {e}") from e


def pick_boundaries(out: FrameOutputs, thr: float = 0.5, nms_window_s: float = 1.0) -> list[float]:
    """Peak-pick the boundary probability and refine each peak by its clamped offset.

    A sample is a peak when its probability reaches `thr` and is the maximum within
    +-`nms_window_s` (on plateaus the earliest sample wins). Refined times closer
    than half a sample period are merged, keeping the more probable one.
    """
    if not 0 < thr < 1:
        raise ValueError(f"thr must lie in (0, 1), got {thr}")
    if not nms_window_s > 0:
        raise ValueError(f"nms_window_s must be positive, got {nms_window_s}")
    p = out.boundary_prob
    T = out.T
    half = 0.5 / out.fps
    w = int(math.floor(nms_window_s * out.fps + 1e-9))
    cands = []
    for k in np.flatnonzero(p >= thr):
        left = p[max(0, k - w):k]
        right = p[k + 1:k + 1 + w]
        if (left.size and left.max() >= p[k]) or (right.size and right.max() > p[k]):
            continue
        t = k / out.fps + float(np.clip(out.offsets_s[k], -half, half))
        if 0.0 < t < out.duration_s:
            cands.append((t, float(p[k])))
    merged: list[tuple[float, float]] = []
    for t, prob in cands:
        if merged and t - merged[-1][0] < half:
            if prob > merged[-1][1]:
                merged[-1] = (t, prob)
            continue
        merged.append((t, prob))
    return [t for t, _ in merged]


def segments_from_boundaries(bounds: Sequence[float], duration_s: float) -> list[tuple[float, float]]:
    """k interior cut points -> k + 1 contiguous intervals covering [0, duration]."""
    bounds = list(bounds)
    for i, b in enumerate(bounds):
        if not 0.0 < b < duration_s:
            raise SceneSegError(f"boundary {b} outside (0, {duration_s})")
        if i and not b > bounds[i - 1]:
            raise SceneSegError(f"boundaries must be strictly increasing, got {bounds[i - 1]} then {b}")
    edges = [0.0, *bounds, float(duration_s)]
    return list(zip(edges, edges[1:]))


def _sparse(scores: np.ndarray) -> dict[int, float]:
    return {int(c): float(v) for c, v in enumerate(np.clip(scores, 0.0, 1.0)) if v > 0}


def label_segments(out: FrameOutputs, segments: Sequence[tuple[float, float]], video_id: str = "") -> PredictedSceneSet:
    """Max-pool class scores over the samples falling in each half-open segment [start, end)."""
    times = out.times()
    segs = []
    for start, end in segments:
        idx = np.flatnonzero((times >= start) & (times < end))
        if idx.size:
            scores = out.label_scores[idx].max(axis=0)
        else:
            k = int(np.clip(round((start + end) / 2 * out.fps), 0, out.T - 1))
            scores = out.label_scores[k]
        segs.append(PredictedScene(float(start), float(end), _sparse(scores)))
    return PredictedSceneSet(video_id, tuple(segs))


def decode_boundaries(out: FrameOutputs, video_id: str = "", thr: float = 0.5, nms_window_s: float = 1.0) -> PredictedSceneSet:
    """Boundary-head decoding: peaks -> partition -> max-pooled labels."""
    segs = segments_from_boundaries(pick_boundaries(out, thr, nms_window_s), out.duration_s)
    return label_segments(out, segs, video_id)


def framewise_label_sets(out: FrameOutputs, thr: float = 0.5) -> list[frozenset[int]]:
    return [frozenset(np.flatnonzero(row >= thr).tolist()) for row in out.label_scores]


def framewise_threshold_decode(out: FrameOutputs, thr: float = 0.5, video_id: str = "") -> PredictedSceneSet:
    """Threshold each sample's scores and cut wherever the label set changes.

    Samples with no label above `thr` inherit the previous non-empty set (leading
    ones the following set). If every sample is empty the whole video becomes one
    segment and a warning is logged.
    """
    if not 0 < thr < 1:
        raise ValueError(f"thr must lie in (0, 1), got {thr}")
    sets = framewise_label_sets(out, thr)
    nonempty = [i for i, s in enumerate(sets) if s]
    if not nonempty:
        log.warning("%s: no sample has a score >= %.3f; emitting a single segment", video_id or "<video>", thr)
        seg = PredictedScene(0.0, float(out.duration_s), _sparse(out.label_scores.max(axis=0)))
        return PredictedSceneSet(video_id, (seg,))
    filled = list(sets)
    for i in range(nonempty[0]):
        filled[i] = sets[nonempty[0]]
    for i in range(nonempty[0] + 1, len(filled)):
        if not filled[i]:
            filled[i] = filled[i - 1]
    starts = [0] + [k for k in range(1, len(filled)) if filled[k] != filled[k - 1]]
    ends = starts[1:] + [out.T]
    segs = []
    for j, (a, b) in enumerate(zip(starts, ends)):
        t0 = 0.0 if j == 0 else a / out.fps
        t1 = float(out.duration_s) if j == len(starts) - 1 else b / out.fps
        segs.append(PredictedScene(t0, t1, _sparse(out.label_scores[a:b].max(axis=0))))
    return PredictedSceneSet(video_id, tuple(segs))


def all_frames_empty(out: FrameOutputs, thr: float = 0.5) -> bool:
    return not np.any(out.label_scores >= thr)
