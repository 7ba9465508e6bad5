"""
Fitting the network on synthetic features
=========================================

Trains the temporal stack and heads on a held-out synthetic corpus (same class
signatures, different videos) and scores the boundary decoder on the default
test corpus. Pass a video count and step count to change the scale, e.g.
``python demos/fit_network.py 800 1500``; the defaults run in about a minute.
"""

import logging
import sys

from sceneseg import default_taxonomy
from sceneseg.decode import decode_boundaries
from sceneseg.metrics import avg_f1, avg_map
from sceneseg.model import FitConfig, ModelConfig, ModelWeights, fit, forward
from sceneseg.synth import SynthConfig, gen_corpus

logging.basicConfig(level=logging.INFO, format="%(message)s")
n_train = int(sys.argv[1]) if len(sys.argv) > 1 else 200
steps = int(sys.argv[2]) if len(sys.argv) > 2 else 400

tax = default_taxonomy()
test = gen_corpus(SynthConfig(), tax)
train = gen_corpus(SynthConfig(num_videos=n_train, video_offset=100), tax)

cfg = ModelConfig(channels=32, frame_dim=16, audio_dim=8, text_dim=12)
w0 = ModelWeights.init(cfg)
anns = train.split.annotations


def score(w, name):
    preds = [decode_boundaries(forward(test.features[a.video_id], w).frame_outputs(), a.video_id)
             for a in test.split.annotations]
    print(f"{name:>14}: Avg_F1 {avg_f1(test.split, preds).avg_f1:.3f}  Avg_mAP {avg_map(test.split, preds, tax).avg_map:.3f}")


score(w0, "random init")

# %% heads alone cannot turn random features into a change detector
w_heads, _ = fit(w0, [train.features[a.video_id] for a in anns], anns,
                 FitConfig(steps=steps, batch_size=16, heads_only=True, log_every=0))
score(w_heads, "heads only")

# %% training the projection and temporal stack as well
w, hist = fit(w0, [train.features[a.video_id] for a in anns], anns,
              FitConfig(steps=steps, batch_size=16, log_every=100))
score(w, "full stack")
