"""Synthetic two-segment corpus where annotators disagree by attending to different halves.

Each transcript concatenates two segments whose tokens come from the
vocabularies of two distinct classes. Every simulated annotator reads the
first segment with its own fixed probability (its attention bias) and labels
the class of whatever it read, except that with probability ``label_noise``
the label is replaced by a uniformly random one.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from seedvote.data import EMOTIONS, K, AnnotationRecord, LabeledExample, Sample, aggregate_gold
from seedvote.errors import InputError


@dataclass(frozen=True)
class SynthConfig:
    n_samples: int = 500
    n_annotators: int = 5
    vocab_per_class: int = 20
    segment_length: int = 6
    attention_bias_strength: float = 0.8
    label_noise: float = 0.1
    seed: int = 0
    # Explicit per-annotator probabilities of reading segment 1; overrides the spread.
    annotator_biases: Optional[tuple[float, ...]] = None

    def __post_init__(self):
        for name in ("n_samples", "n_annotators", "vocab_per_class", "segment_length"):
            if getattr(self, name) < 1:
                raise InputError(f"{name} must be >= 1")
        if not 0.0 <= self.attention_bias_strength <= 1.0:
            raise InputError("attention_bias_strength must lie in [0, 1]")
        if not 0.0 <= self.label_noise < 1.0:
            raise InputError("label_noise must lie in [0, 1)")
        if self.annotator_biases is not None:
            if len(self.annotator_biases) != self.n_annotators:
                raise InputError("annotator_biases needs one entry per annotator")
            if any(not 0.0 <= b <= 1.0 for b in self.annotator_biases):
                raise InputError("annotator biases must lie in [0, 1]")

    def biases(self) -> np.ndarray:
        if self.annotator_biases is not None:
            return np.asarray(self.annotator_biases, dtype=np.float64)
        if self.n_annotators == 1:
            return np.array([0.5])
        s = self.attention_bias_strength
        return np.linspace(1.0 - s, s, self.n_annotators)


@dataclass(frozen=True)
class SynthDataset:
    samples: tuple[Sample, ...]
    records: tuple[AnnotationRecord, ...]
    examples: tuple[LabeledExample, ...]
    segment_classes: np.ndarray  # (n_samples, 2): class of segment 1 and segment 2
    annotator_biases: np.ndarray  # (n_annotators,)
    config: SynthConfig

    @property
    def transcripts(self) -> dict[str, str]:
        return {s.sample_id: s.transcript for s in self.samples}


def class_vocabulary(c: int, size: int) -> list[str]:
    return [f"{EMOTIONS[c][:3]}{j:02d}" for j in range(size)]


def label_mixture(c1: int, c2: int, bias: float, label_noise: float) -> np.ndarray:
    """Exact label distribution of one annotator with the given bias on one sample."""
    p = np.full(K, label_noise / K)
    p[c1] += (1.0 - label_noise) * bias
    p[c2] += (1.0 - label_noise) * (1.0 - bias)
    return p


def generate_synthetic(config: SynthConfig = SynthConfig()) -> SynthDataset:
    rng = np.random.default_rng(config.seed)
    vocab = [class_vocabulary(c, config.vocab_per_class) for c in range(K)]
    biases = config.biases()
    width = len(str(config.n_samples - 1))
    samples, records, examples, classes = [], [], [], []
    for i in range(config.n_samples):
        sid = f"s{i:0{width}d}"
        c1 = int(rng.integers(K))
        c2 = int((c1 + rng.integers(1, K)) % K)
        seg1 = [vocab[c1][j] for j in rng.integers(config.vocab_per_class, size=config.segment_length)]
        seg2 = [vocab[c2][j] for j in rng.integers(config.vocab_per_class, size=config.segment_length)]
        text1, text2 = " ".join(seg1), " ".join(seg2)
        transcript = f"{text1} {text2}"
        span1 = ((0, len(text1)),)
        span2 = ((len(text1) + 1, len(transcript)),)
        sample_records = []
        for j, bias in enumerate(biases):
            attends_first = rng.random() < bias
            label = c1 if attends_first else c2
            if rng.random() < config.label_noise:
                label = int(rng.integers(K))
            sample_records.append(
                AnnotationRecord(
                    sample_id=sid,
                    annotator_id=f"a{j}",
                    q1_any_emotion=True,
                    q2_primary=label,
                    q3_all_present=frozenset((c1, c2)),
                    q4_emotion=label,
                    q4_spans=span1 if attends_first else span2,
                )
            )
        samples.append(Sample(sid, transcript))
        records.extend(sample_records)
        examples.append(aggregate_gold(sample_records))
        classes.append((c1, c2))
    return SynthDataset(
        samples=tuple(samples),
        records=tuple(records),
        examples=tuple(examples),
        segment_classes=np.array(classes, dtype=np.int64),
        annotator_biases=biases,
        config=config,
    )
