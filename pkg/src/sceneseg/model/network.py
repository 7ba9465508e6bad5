"""End-to-end forward pass from a feature bundle to per-sample outputs."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..decode import FrameOutputs
from .config import FeatureBundle, ModelWeights
from .layers import fuse, heads_forward, mstcn_forward, sigmoid, temporal_difference


@dataclass
class ForwardResult:
    hidden: list[np.ndarray]            # per stage (T, channels)
    diff: list[np.ndarray]              # per stage temporal difference of `hidden`
    label_logits: list[np.ndarray]      # per stage (T, C)
    boundary_logits: list[np.ndarray]   # per stage (T,)
    offsets_s: list[np.ndarray]         # per stage (T,)
    fps: float
    duration_s: float

    def frame_outputs(self, stage: int = -1) -> FrameOutputs:
        return FrameOutputs(
            fps=self.fps,
            label_scores=sigmoid(self.label_logits[stage]),
            boundary_prob=sigmoid(self.boundary_logits[stage]),
            offsets_s=self.offsets_s[stage],
            duration_s=self.duration_s,
        )


def forward(bundle: FeatureBundle, w: ModelWeights) -> ForwardResult:
    cfg = w.config
    x = fuse(bundle.frame, bundle.audio, bundle.text, w)
    x = x @ w["proj.w"] + w["proj.b"]
    hidden = mstcn_forward(x, cfg, w)
    diff = [temporal_difference(h) for h in hidden]
    heads = [heads_forward(h, d, w, bundle.fps, stage=s) for s, (h, d) in enumerate(zip(hidden, diff))]
    return ForwardResult(
        hidden=hidden,
        diff=diff,
        label_logits=[a for a, _, _ in heads],
        boundary_logits=[b for _, b, _ in heads],
        offsets_s=[c for _, _, c in heads],
        fps=bundle.fps,
        duration_s=float(bundle.duration_s),
    )
