"""Rasterize continuous-time annotations onto the sampling grid."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np

from ..core import VideoAnnotation, internal_boundaries
from ..decode import num_samples

log = logging.getLogger(__name__)


@dataclass
class RasterTargets:
    boundary_01: np.ndarray     # (T,) 1 at the nearest sample of each interior boundary
    offsets_s: np.ndarray       # (T,) boundary time minus sample time at positives, 0 elsewhere
    frame_labels: np.ndarray    # (T, C)
    scene_labels: np.ndarray    # (S, C)
    video_labels: np.ndarray    # (C,)
    scene_index: np.ndarray     # (T,) scene containing each sample time
    fps: float


def nearest_sample(t: float, fps: float) -> int:
    """Index of the sample nearest to time `t`; an exact midpoint goes to the earlier sample."""
    return int(math.ceil(t * fps - 0.5))


def rasterize_targets(ann: VideoAnnotation, fps: float, num_classes: int) -> RasterTargets:
    T = num_samples(ann.duration_s, fps)
    times = np.arange(T) / fps
    boundary = np.zeros(T)
    offsets = np.zeros(T)
    for b in internal_boundaries(ann):
        k = nearest_sample(b, fps)
        if k >= T:
            log.warning("%s: boundary %.3f lies past the last sample; clamped to sample %d", ann.video_id, b, T - 1)
            k = T - 1
        if boundary[k]:
            log.warning("%s: boundary %.3f maps to sample %d already taken at %.1f fps; keeping the earlier one",
                        ann.video_id, b, k, fps)
            continue
        boundary[k] = 1.0
        offsets[k] = b - k / fps
    S = len(ann.scenes)
    scene_labels = np.zeros((S, num_classes))
    for j, s in enumerate(ann.scenes):
        scene_labels[j, sorted(s.labels)] = 1.0
    starts = np.array([s.start_s for s in ann.scenes])
    scene_index = np.clip(np.searchsorted(starts, times, side="right") - 1, 0, S - 1)
    return RasterTargets(
        boundary_01=boundary,
        offsets_s=offsets,
        frame_labels=scene_labels[scene_index],
        scene_labels=scene_labels,
        video_labels=scene_labels.max(axis=0),
        scene_index=scene_index,
        fps=fps,
    )
