"""Seeded synthetic corpora: annotations, shot cuts, features and model-like outputs.

Randomness comes from numpy's PCG64. Video ``i`` of a corpus with seed ``s``
draws from ``SeedSequence(s, spawn_key=(0, i))``; the per-class feature
signatures from ``SeedSequence(s, spawn_key=(1,))``; boundary perturbations from
``SeedSequence(seed, spawn_key=(2, i))``. Scene times are quantized to
``time_step`` seconds.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .annotation_io import DatasetSplit, ShotBoundarySet
from .core import (
    PredictedScene,
    PredictedSceneSet,
    Scene,
    SceneSegError,
    Taxonomy,
    VideoAnnotation,
    internal_boundaries,
)
from .decode import FrameOutputs, num_samples
from .model.config import FeatureBundle
from .model.targets import rasterize_targets


class InfeasibleConfig(SceneSegError, ValueError):
    pass


@dataclass(frozen=True)
class SynthConfig:
    seed: int = 0
    num_videos: int = 100
    video_offset: int = 0             # index of the first video; corpora with equal seeds share class signatures
    duration_min_s: float = 25.0
    duration_max_s: float = 60.0
    scenes_mean: float = 2.8
    scenes_max: int = 6
    min_scene_s: float = 2.0
    scene_len_sigma: float = 0.5      # log-normal shape of relative scene lengths
    labels_mean: float = 6.0
    zipf_exponent: float = 0.8
    fps: float = 2.0
    time_step: float = 0.01
    extra_shots_mean: float = 7.0     # shot cuts inside scenes, per video
    shot_jitter_s: float = 0.0        # offset of the shot cut placed at each scene cut
    frame_dim: int = 16
    audio_dim: int = 8
    text_dim: int = 12
    appearance: float = 0.5           # weight of the per-scene random appearance vector
    speech_fraction: float = 0.6
    feature_noise: float = 0.05
    label_noise: float = 0.0
    boundary_noise: float = 0.0
    boundary_blur_s: float = 0.5
    offset_noise_s: float = 0.0

    def validate(self, num_classes: int) -> None:
        if self.num_videos < 0 or self.video_offset < 0:
            raise InfeasibleConfig("num_videos and video_offset must be >= 0")
        if not 0 < self.duration_min_s <= self.duration_max_s:
            raise InfeasibleConfig("need 0 < duration_min_s <= duration_max_s")
        if self.scenes_max < 1 or self.scenes_mean < 1:
            raise InfeasibleConfig("need scenes_max >= 1 and scenes_mean >= 1")
        if self.min_scene_s <= 0 or self.fps <= 0 or self.time_step <= 0:
            raise InfeasibleConfig("min_scene_s, fps and time_step must be positive")
        if self.min_scene_s < 1.0 / self.fps:
            raise InfeasibleConfig(f"min_scene_s {self.min_scene_s} shorter than one sample period at {self.fps} fps")
        if self.scenes_max * self.min_scene_s > self.duration_min_s:
            raise InfeasibleConfig(
                f"{self.scenes_max} scenes of at least {self.min_scene_s}s do not fit in {self.duration_min_s}s")
        probs = label_probabilities(self, num_classes, np.arange(num_classes))
        if probs.max() > 1.0:
            raise InfeasibleConfig(
                f"labels_mean {self.labels_mean} with zipf_exponent {self.zipf_exponent} gives a class "
                f"inclusion probability of {probs.max():.3f} > 1")
        for name in ("feature_noise", "label_noise", "boundary_noise", "boundary_blur_s", "offset_noise_s",
                     "shot_jitter_s", "extra_shots_mean", "appearance"):
            if getattr(self, name) < 0:
                raise InfeasibleConfig(f"{name} must be >= 0")
        if not 0 <= self.speech_fraction <= 1:
            raise InfeasibleConfig("speech_fraction must lie in [0, 1]")


def label_probabilities(cfg: SynthConfig, num_classes: int, rank_of_class: np.ndarray) -> np.ndarray:
    """Per-scene inclusion probability of each class: labels_mean * Zipf(rank)."""
    ranks = rank_of_class.astype(float) + 1.0
    z = ranks ** -cfg.zipf_exponent
    return cfg.labels_mean * z / z.sum()


@dataclass
class SynthCorpus:
    config: SynthConfig
    split: DatasetSplit
    shots: dict[str, ShotBoundarySet]
    features: dict[str, FeatureBundle]
    outputs: dict[str, FrameOutputs]
    class_probs: np.ndarray            # independent per-scene inclusion probabilities
    shot_offsets: dict[str, list[float]] = field(default_factory=dict)

    def expected_class_frequency(self) -> np.ndarray:
        """Probability that a scene carries each class, given the non-empty label-set rule."""
        p_empty = float(np.prod(1.0 - self.class_probs))
        return self.class_probs / (1.0 - p_empty)


def _video_rng(seed: int, *key: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed, spawn_key=key)))


def _quantize(x: float, step: float) -> float:
    return round(round(x / step) * step, 10)


def _scene_cuts(rng: np.random.Generator, cfg: SynthConfig, duration: float) -> list[float]:
    k_cap = min(cfg.scenes_max, int(duration // cfg.min_scene_s))
    k = int(min(1 + rng.poisson(cfg.scenes_mean - 1), k_cap))
    if k == 1:
        return []
    # truncated log-normal relative lengths
    w = np.empty(k)
    for i in range(k):
        while True:
            v = rng.lognormal(0.0, cfg.scene_len_sigma)
            if 0.2 <= v <= 5.0:
                w[i] = v
                break
    slack = duration - k * cfg.min_scene_s
    lengths = cfg.min_scene_s + slack * w / w.sum()
    cuts = [_quantize(c, cfg.time_step) for c in np.cumsum(lengths)[:-1]]
    return cuts


def _draw_labels(rng: np.random.Generator, probs: np.ndarray, allowed: np.ndarray, previous: frozenset | None) -> frozenset:
    while True:
        mask = (rng.random(probs.size) < probs) & allowed
        labels = frozenset(np.flatnonzero(mask).tolist())
        if labels and labels != previous:
            return labels


def _window_mix(times: np.ndarray, half: float, edges: np.ndarray, duration: float) -> np.ndarray:
    """Fraction of each sample's window [t - half, t + half) covered by each scene."""
    lo = np.clip(times - half, 0.0, duration)[:, None]
    hi = np.clip(times + half, 0.0, duration)[:, None]
    a = edges[None, :-1]
    b = edges[None, 1:]
    cover = np.clip(np.minimum(hi, b) - np.maximum(lo, a), 0.0, None)
    return cover / cover.sum(axis=1, keepdims=True)


def _features(rng: np.random.Generator, cfg: SynthConfig, ann: VideoAnnotation,
              sigs: dict[str, np.ndarray]) -> FeatureBundle:
    T = num_samples(ann.duration_s, cfg.fps)
    times = np.arange(T) / cfg.fps
    edges = np.array([0.0] + [s.end_s for s in ann.scenes])
    mix = _window_mix(times, 0.5 / cfg.fps, edges, ann.duration_s)
    out = {}
    for m, dim in (("frame", cfg.frame_dim), ("audio", cfg.audio_dim), ("text", cfg.text_dim)):
        content = np.stack([
            sigs[m][sorted(s.labels)].sum(axis=0) / math.sqrt(len(s.labels))
            + cfg.appearance * rng.normal(0.0, 1.0 / math.sqrt(dim), dim)
            for s in ann.scenes
        ])
        if m == "text":
            speaking = rng.random(len(ann.scenes)) < cfg.speech_fraction
            starts = edges[:-1]
            idx = np.clip(np.searchsorted(starts, times, side="right") - 1, 0, len(ann.scenes) - 1)
            x = content[idx] * speaking[idx, None]
            x = x + speaking[idx, None] * rng.normal(0.0, cfg.feature_noise, x.shape)
        else:
            x = mix @ content + rng.normal(0.0, cfg.feature_noise, (T, dim))
        out[m] = x
    return FeatureBundle(out["frame"], out["audio"], out["text"], cfg.fps, ann.duration_s)


def _outputs(rng: np.random.Generator, cfg: SynthConfig, ann: VideoAnnotation, num_classes: int) -> FrameOutputs:
    tgt = rasterize_targets(ann, cfg.fps, num_classes)
    T = tgt.boundary_01.size
    scores = tgt.frame_labels + (rng.normal(0.0, cfg.label_noise, tgt.frame_labels.shape) if cfg.label_noise else 0.0)
    pos = np.flatnonzero(tgt.boundary_01)
    if cfg.boundary_blur_s > 0 and pos.size:
        k = np.arange(T)[:, None] / cfg.fps
        prob = np.exp(-((k - pos[None, :] / cfg.fps) ** 2) / (2 * cfg.boundary_blur_s ** 2)).max(axis=1)
    else:
        prob = tgt.boundary_01.copy()
    if cfg.boundary_noise:
        prob = prob + rng.normal(0.0, cfg.boundary_noise, T)
    offsets = tgt.offsets_s.copy()
    if cfg.offset_noise_s:
        offsets[pos] += rng.normal(0.0, cfg.offset_noise_s, pos.size)
    return FrameOutputs(cfg.fps, np.clip(scores, 0.0, 1.0), np.clip(prob, 0.0, 1.0), offsets, ann.duration_s)


def _shots(rng: np.random.Generator, cfg: SynthConfig, ann: VideoAnnotation) -> tuple[ShotBoundarySet, list[float]]:
    cuts = internal_boundaries(ann)
    offsets = [float(_quantize(rng.uniform(-cfg.shot_jitter_s, cfg.shot_jitter_s), cfg.time_step))
               if cfg.shot_jitter_s else 0.0 for _ in cuts]
    shots = {_quantize(c + o, cfg.time_step) for c, o in zip(cuts, offsets)}
    for _ in range(rng.poisson(cfg.extra_shots_mean)):
        t = _quantize(rng.uniform(0.0, ann.duration_s), cfg.time_step)
        if 0 < t < ann.duration_s and all(abs(t - c) > 0.5 for c in cuts):
            shots.add(t)
    return ShotBoundarySet(ann.video_id, tuple(sorted(s for s in shots if 0 < s < ann.duration_s))), offsets


def gen_corpus(cfg: SynthConfig, tax: Taxonomy) -> SynthCorpus:
    """Generate annotations, shots, feature bundles and frame outputs for `cfg.num_videos` videos."""
    C = tax.num_classes
    cfg.validate(C)
    sig_rng = _video_rng(cfg.seed, 1)
    rank = np.argsort(sig_rng.permutation(C))
    probs = label_probabilities(cfg, C, rank)
    sigs = {m: sig_rng.normal(0.0, 1.0 / math.sqrt(d), (C, d))
            for m, d in (("frame", cfg.frame_dim), ("audio", cfg.audio_dim), ("text", cfg.text_dim))}
    excl: dict[int, list[int]] = {}
    for c in tax.classes:
        if c.exclusion_group is not None:
            excl.setdefault(c.exclusion_group, []).append(c.id)

    anns, shots, feats, outs, shot_offsets = [], {}, {}, {}, {}
    for i in range(cfg.video_offset, cfg.video_offset + cfg.num_videos):
        rng = _video_rng(cfg.seed, 0, i)
        video_id = f"synth_{i:05d}"
        duration = _quantize(rng.uniform(cfg.duration_min_s, cfg.duration_max_s), cfg.time_step)
        cuts = _scene_cuts(rng, cfg, duration)
        allowed = np.ones(C, dtype=bool)
        for members in excl.values():
            keep = members[int(rng.integers(len(members)))]
            allowed[[m for m in members if m != keep]] = False
        edges = [0.0, *cuts, duration]
        scenes = []
        prev = None
        for a, b in zip(edges, edges[1:]):
            prev = _draw_labels(rng, probs, allowed, prev)
            scenes.append(Scene(a, b, prev))
        ann = VideoAnnotation(video_id, duration, tuple(scenes))
        anns.append(ann)
        shots[video_id], shot_offsets[video_id] = _shots(rng, cfg, ann)
        feats[video_id] = _features(rng, cfg, ann, sigs)
        outs[video_id] = _outputs(rng, cfg, ann, C)
    return SynthCorpus(cfg, DatasetSplit("test", tuple(anns)), shots, feats, outs, probs, shot_offsets)


def perturb_boundaries(split: DatasetSplit, sigma_s: float, seed: int = 0, min_scene_s: float = 0.5) -> list[PredictedSceneSet]:
    """Jitter every interior boundary by Gaussian noise, keeping order.

    The noise is not truncated; instead each moved boundary is clamped to stay at
    least `min_scene_s` (capped at half the shortest original scene) away from its
    neighbours. Labels are copied at score 1.0.
    """
    if sigma_s < 0:
        raise ValueError(f"sigma_s must be >= 0, got {sigma_s}")
    out = []
    for i, ann in enumerate(split.annotations):
        rng = _video_rng(seed, 2, i)
        cuts = internal_boundaries(ann)
        m = min(min_scene_s, min(s.duration for s in ann.scenes) / 2)
        noise = rng.normal(0.0, sigma_s, len(cuts)) if sigma_s else np.zeros(len(cuts))
        new = []
        for j, (b, n) in enumerate(zip(cuts, noise)):
            lo = (new[-1] if new else 0.0) + m
            hi = (cuts[j + 1] if j + 1 < len(cuts) else ann.duration_s) - m
            new.append(float(min(max(b + n, lo), hi)))
        edges = [0.0, *new, ann.duration_s]
        segs = tuple(PredictedScene(a, b, {c: 1.0 for c in sorted(s.labels)})
                     for a, b, s in zip(edges, edges[1:], ann.scenes))
        out.append(PredictedSceneSet(ann.video_id, segs))
    return out


def shift_boundaries(split: DatasetSplit, shift_s: float) -> list[PredictedSceneSet]:
    """Every interior boundary moved by exactly `shift_s`; labels copied at score 1.0."""
    out = []
    for ann in split.annotations:
        edges = [0.0, *(b + shift_s for b in internal_boundaries(ann)), ann.duration_s]
        segs = tuple(PredictedScene(a, b, {c: 1.0 for c in sorted(s.labels)})
                     for a, b, s in zip(edges, edges[1:], ann.scenes))
        out.append(PredictedSceneSet(ann.video_id, segs))
    return out


def with_noise(cfg: SynthConfig, **kw) -> SynthConfig:
    return replace(cfg, **kw)
