"""
Decoding simulated network outputs
==================================

The synthetic generator also writes model-like per-sample outputs: blurred
boundary probabilities, sub-sample offsets and noisy label scores. This script
decodes them with both strategies at increasing noise.
"""

from sceneseg import default_taxonomy
from sceneseg.decode import decode_boundaries, framewise_threshold_decode
from sceneseg.metrics import avg_f1, avg_map
from sceneseg.synth import SynthConfig, gen_corpus

tax = default_taxonomy()

print(f"{'label':>6} {'bnd':>5} {'off':>5} | {'boundary F1':>11} {'mAP':>6} | {'framewise F1':>12} {'mAP':>6}")
for label_noise, boundary_noise, offset_noise in [(0.0, 0.0, 0.0), (0.1, 0.05, 0.02), (0.3, 0.15, 0.05),
                                                  (0.5, 0.3, 0.1)]:
    c = gen_corpus(SynthConfig(num_videos=60, label_noise=label_noise, boundary_noise=boundary_noise,
                               offset_noise_s=offset_noise), tax)
    anns = c.split.annotations
    by_peaks = [decode_boundaries(c.outputs[a.video_id], a.video_id) for a in anns]
    by_frames = [framewise_threshold_decode(c.outputs[a.video_id], 0.5, a.video_id) for a in anns]
    print(f"{label_noise:6.2f} {boundary_noise:5.2f} {offset_noise:5.2f} | "
          f"{avg_f1(c.split, by_peaks).avg_f1:11.3f} {avg_map(c.split, by_peaks, tax).avg_map:6.3f} | "
          f"{avg_f1(c.split, by_frames).avg_f1:12.3f} {avg_map(c.split, by_frames, tax).avg_map:6.3f}")

# Frame-wise cuts can only fall on sample times (every 0.5 s at 2 fps), so its F1
# is limited at the tight distance thresholds even without noise.
