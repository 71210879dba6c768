import numpy as np
import pytest

from seedvote.data import aggregate_gold, group_by_sample
from seedvote.errors import InputError
from seedvote.eval.synth import SynthConfig, class_vocabulary, generate_synthetic, label_mixture


def test_deterministic():
    a = generate_synthetic(SynthConfig(n_samples=30, seed=5))
    b = generate_synthetic(SynthConfig(n_samples=30, seed=5))
    assert a.samples == b.samples and a.records == b.records
    assert generate_synthetic(SynthConfig(n_samples=30, seed=6)).samples != a.samples


def test_structure():
    ds = generate_synthetic(SynthConfig(n_samples=20, seed=1))
    assert len(ds.samples) == 20 and len(ds.records) == 100
    for s, (c1, c2) in zip(ds.samples, ds.segment_classes):
        assert c1 != c2
        toks = s.transcript.split()
        assert len(toks) == 12
        assert set(toks[:6]) <= set(class_vocabulary(c1, 20))
        assert set(toks[6:]) <= set(class_vocabulary(c2, 20))
    groups = group_by_sample(ds.records)
    for ex in ds.examples:
        again = aggregate_gold(groups[ex.sample_id])
        assert again.gold == ex.gold and np.array_equal(again.true_dist, ex.true_dist)


def test_highlights_cover_attended_segment():
    ds = generate_synthetic(SynthConfig(n_samples=10, label_noise=0.0, seed=2))
    text = ds.transcripts
    for r in ds.records:
        (a, b), = r.q4_spans
        vocab = class_vocabulary(r.q2_primary, 20)
        assert set(text[r.sample_id][a:b].split()) <= set(vocab)


def test_pinned_attention_no_noise_one_hot():
    cfg = SynthConfig(n_samples=50, label_noise=0.0, attention_bias_strength=1.0,
                      annotator_biases=(1.0,) * 5, seed=3)
    ds = generate_synthetic(cfg)
    for ex, (c1, _) in zip(ds.examples, ds.segment_classes):
        assert ex.gold == c1
        assert ex.true_dist[c1] == 1.0 and ex.disagreement == 0


def test_even_attention_concentrates_on_segment_classes():
    # Monte-Carlo: 50 annotators at bias 0.5 and no noise.
    ds = generate_synthetic(SynthConfig(n_samples=40, n_annotators=50, attention_bias_strength=0.5,
                                        label_noise=0.0, seed=4))
    for ex, (c1, c2) in zip(ds.examples, ds.segment_classes):
        assert ex.true_dist[c1] + ex.true_dist[c2] >= 0.95
        assert abs(ex.true_dist[c1] - 0.5) < 0.3


def test_bias_spread():
    assert SynthConfig(n_annotators=5).biases().tolist() == pytest.approx([0.2, 0.35, 0.5, 0.65, 0.8])


def test_label_mixture_sums_to_one():
    p = label_mixture(1, 4, 0.3, 0.1)
    assert p.sum() == pytest.approx(1.0)
    assert p[1] == pytest.approx(0.1 / 6 + 0.9 * 0.3)


def test_config_validation():
    with pytest.raises(InputError):
        SynthConfig(label_noise=1.0)
    with pytest.raises(InputError):
        SynthConfig(n_samples=0)
    with pytest.raises(InputError):
        SynthConfig(n_annotators=2, annotator_biases=(0.5,))
