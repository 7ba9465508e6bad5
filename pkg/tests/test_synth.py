import numpy as np
import pytest
from scipy import stats

from sceneseg.annotation_io import parse_annotations, serialize_annotations
from sceneseg.core import validate_annotation
from sceneseg.decode import decode_boundaries
from sceneseg.metrics import avg_f1, avg_map
from sceneseg.synth import InfeasibleConfig, SynthConfig, gen_corpus, perturb_boundaries, with_noise
from sceneseg.core import PredictedScene, PredictedSceneSet


def test_annotations_are_valid_and_round_trip(corpus, tax):
    assert len(corpus.split.annotations) == 100
    for ann in corpus.split.annotations:
        assert validate_annotation(ann, tax).valid
        assert 25.0 <= ann.duration_s <= 60.0
    again = parse_annotations(serialize_annotations(corpus.split), tax)
    assert again.annotations == corpus.split.annotations


def test_mean_labels_per_scene(corpus):
    n = [len(s.labels) for a in corpus.split.annotations for s in a.scenes]
    assert abs(np.mean(n) - 6.0) <= 0.2


def test_label_histogram_follows_target(tax):
    # about 10k scenes
    c = gen_corpus(SynthConfig(seed=3, num_videos=3500), tax)
    counts = np.zeros(tax.num_classes)
    for a in c.split.annotations:
        for s in a.scenes:
            counts[sorted(s.labels)] += 1
    n_scenes = sum(len(a.scenes) for a in c.split.annotations)
    assert n_scenes >= 9500
    expected = n_scenes * c.expected_class_frequency()
    # pool the rarest classes so every cell expects at least 5
    order = np.argsort(expected)
    obs, exp = [], []
    acc_o = acc_e = 0.0
    for i in order:
        acc_o += counts[i]
        acc_e += expected[i]
        if acc_e >= 5:
            obs.append(acc_o)
            exp.append(acc_e)
            acc_o = acc_e = 0.0
    obs[-1] += acc_o
    exp[-1] += acc_e
    exp = np.array(exp) * (sum(obs) / sum(exp))
    assert stats.chisquare(obs, exp).pvalue > 0.01
    # the popularity order is long-tailed
    top = np.sort(counts)[::-1]
    assert top[0] > 5 * top[len(top) // 2]


def test_seeded_determinism(tax):
    a = gen_corpus(SynthConfig(num_videos=5), tax)
    b = gen_corpus(SynthConfig(num_videos=5), tax)
    assert a.split == b.split
    for vid in a.features:
        assert np.array_equal(a.features[vid].frame, b.features[vid].frame)
        assert np.array_equal(a.outputs[vid].boundary_prob, b.outputs[vid].boundary_prob)
    c = gen_corpus(SynthConfig(seed=1, num_videos=5), tax)
    assert c.split != a.split


def test_video_offset_continues_the_same_corpus(tax):
    full = gen_corpus(SynthConfig(num_videos=6), tax)
    tail = gen_corpus(SynthConfig(num_videos=2, video_offset=4), tax)
    assert tail.split.annotations == full.split.annotations[4:]
    assert np.array_equal(tail.features["synth_00005"].text, full.features["synth_00005"].text)


def test_infeasible_configs(tax):
    with pytest.raises(InfeasibleConfig):
        gen_corpus(SynthConfig(scenes_max=20, min_scene_s=2.0, duration_min_s=25.0), tax)
    with pytest.raises(InfeasibleConfig):
        gen_corpus(SynthConfig(labels_mean=60.0), tax)
    with pytest.raises(InfeasibleConfig):
        gen_corpus(SynthConfig(feature_noise=-1.0), tax)
    with pytest.raises(InfeasibleConfig):
        gen_corpus(SynthConfig(min_scene_s=0.2, fps=2.0), tax)


def test_noiseless_outputs_decode_exactly(tax):
    c = gen_corpus(SynthConfig(num_videos=30, boundary_blur_s=0.0), tax)
    preds = [decode_boundaries(c.outputs[a.video_id], a.video_id) for a in c.split.annotations]
    for p, a in zip(preds, c.split.annotations):
        assert len(p.segments) == len(a.scenes)
        for ps, s in zip(p.segments, a.scenes):
            assert abs(ps.end_s - s.end_s) <= 1e-9
            assert set(ps.scores) == set(s.labels)
    assert avg_f1(c.split, preds).avg_f1 == 1.0
    assert avg_map(c.split, preds, tax).avg_map == 1.0


def test_default_blur_still_decodes_exactly(corpus, tax):
    preds = [decode_boundaries(corpus.outputs[a.video_id], a.video_id) for a in corpus.split.annotations]
    assert avg_f1(corpus.split, preds).avg_f1 == 1.0


def test_shots_contain_scene_cuts(corpus):
    for a in corpus.split.annotations:
        shots = set(corpus.shots[a.video_id].boundaries)
        assert {s.end_s for s in a.scenes[:-1]} <= shots


def test_features_have_expected_shapes(corpus):
    cfg = corpus.config
    for a in corpus.split.annotations[:5]:
        b = corpus.features[a.video_id]
        T = b.T
        assert b.frame.shape == (T, cfg.frame_dim)
        assert b.audio.shape == (T, cfg.audio_dim)
        assert b.text.shape == (T, cfg.text_dim)


def test_perturbation_sigma_zero_is_identity(corpus, tax):
    preds = perturb_boundaries(corpus.split, 0.0)
    assert avg_f1(corpus.split, preds).avg_f1 == 1.0
    assert avg_map(corpus.split, preds, tax).avg_map == 1.0
    with pytest.raises(ValueError):
        perturb_boundaries(corpus.split, -0.1)


def test_perturbation_keeps_order_and_min_length(corpus):
    for p in perturb_boundaries(corpus.split, 0.6, seed=4):
        assert all(s.end_s - s.start_s >= 0.5 - 1e-9 for s in p.segments)


def test_f1_decreases_with_jitter(corpus):
    f = [avg_f1(corpus.split, perturb_boundaries(corpus.split, s, seed=0)).avg_f1 for s in (0.0, 0.05, 0.2, 0.6)]
    assert all(a > b for a, b in zip(f, f[1:]))


def test_dropping_a_label_lowers_map(corpus, tax):
    rng = np.random.default_rng(0)
    preds = []
    for p in perturb_boundaries(corpus.split, 0.0):
        segs = []
        for s in p.segments:
            drop = int(rng.choice(sorted(s.scores)))
            segs.append(PredictedScene(s.start_s, s.end_s, {c: v for c, v in s.scores.items() if c != drop}))
        preds.append(PredictedSceneSet(p.video_id, tuple(segs)))
    assert avg_map(corpus.split, preds, tax).avg_map < 1.0


def test_with_noise_replaces_fields():
    cfg = with_noise(SynthConfig(), feature_noise=0.2, label_noise=0.1)
    assert cfg.feature_noise == 0.2 and cfg.label_noise == 0.1 and cfg.seed == 0
