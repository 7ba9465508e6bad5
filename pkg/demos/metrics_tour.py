"""
How the two metrics react to boundary and score errors
=======================================================

Scores a synthetic corpus against itself, then against predictions with
shifted boundaries, jittered boundaries and rescaled scores.
"""

import numpy as np

from sceneseg import default_taxonomy
from sceneseg.core import perfect_predictions
from sceneseg.decode import decode_boundaries
from sceneseg.metrics import avg_f1, avg_map
from sceneseg.synth import SynthConfig, gen_corpus, perturb_boundaries, shift_boundaries

tax = default_taxonomy()
corpus = gen_corpus(SynthConfig(num_videos=100), tax)
gt = corpus.split
print(f"{len(gt)} videos, {sum(len(a.scenes) for a in gt.annotations)} scenes")

# %% ground truth against itself
perfect = [perfect_predictions(a) for a in gt.annotations]
print("perfect:      Avg_mAP", avg_map(gt, perfect, tax).avg_map, " Avg_F1", avg_f1(gt, perfect).avg_f1)

# %% a constant shift is either inside or outside each distance threshold
res = avg_f1(gt, shift_boundaries(gt, 0.15))
print("shift 0.15 s: F1@t", [round(r["f1"], 3) for r in res.per_t], " Avg_F1", round(res.avg_f1, 3))

# %% Gaussian jitter degrades F1 smoothly; mAP drops at the strict tIoU thresholds first
for sigma in (0.05, 0.2, 0.6):
    preds = perturb_boundaries(gt, sigma, seed=0)
    m = avg_map(gt, preds, tax)
    print(f"jitter {sigma:4.2f}: Avg_F1 {avg_f1(gt, preds).avg_f1:.3f}  Avg_mAP {m.avg_map:.3f}  "
          f"mAP@0.5 {m.map_at_tiou[0]:.3f}  mAP@0.95 {m.map_at_tiou[-1]:.3f}")

# %% only the ranking of scores matters for AP
noisy = gen_corpus(SynthConfig(num_videos=100, label_noise=0.3), tax)
preds = [decode_boundaries(noisy.outputs[a.video_id], a.video_id) for a in noisy.split.annotations]
base = avg_map(noisy.split, preds, tax).avg_map
squared = [type(p)(p.video_id, tuple(type(s)(s.start_s, s.end_s, {c: v * v for c, v in s.scores.items()})
                                     for s in p.segments)) for p in preds]
print("label noise 0.3: Avg_mAP", round(base, 4), " after s -> s^2:", round(avg_map(noisy.split, squared, tax).avg_map, 4))
print("classes without ground truth are skipped:", len(avg_map(noisy.split, preds, tax).skipped_classes))
print("mean labels per scene:", np.mean([len(s.labels) for a in gt.annotations for s in a.scenes]).round(2))
