"""Inter-rater agreement: pairwise Cohen's kappa and highlight-span overlap."""

from __future__ import annotations

from dataclasses import dataclass
from itertools import combinations
from typing import Hashable, Iterable, Mapping, Optional, Sequence

from seedvote.data import EMOTIONS, K, AnnotationRecord, Sample, group_by_sample
from seedvote.encoder import token_spans
from seedvote.errors import InputError

RATER_KEYS = ("annotator", "slot")


@dataclass(frozen=True)
class KappaResult:
    value: Optional[float]
    defined: bool
    n_pairs_used: int
    n_items: int = 0


UNDEFINED = KappaResult(None, False, 0, 0)


@dataclass(frozen=True)
class RatingMatrix:
    """Items x raters grid; ``None`` marks a missing rating."""

    ratings: tuple[tuple[Optional[Hashable], ...], ...]
    categories: tuple[Hashable, ...]

    def __post_init__(self):
        if not self.ratings:
            raise InputError("rating matrix needs at least one item")
        width = len(self.ratings[0])
        if width < 2:
            raise InputError("rating matrix needs at least two raters")
        allowed = set(self.categories)
        for i, row in enumerate(self.ratings):
            if len(row) != width:
                raise InputError(f"item {i} has {len(row)} ratings, expected {width}")
            for v in row:
                if v is not None and v not in allowed:
                    raise InputError(f"item {i}: category {v!r} not in the declared universe")

    @property
    def n_raters(self) -> int:
        return len(self.ratings[0])

    def column(self, j: int) -> list:
        return [row[j] for row in self.ratings]


def cohen_kappa_pair(r1: Sequence, r2: Sequence) -> KappaResult:
    """Cohen's kappa over the items both raters labelled.

    Undefined when nothing is co-rated or when chance agreement is 1.
    """
    if len(r1) != len(r2):
        raise InputError("rating sequences must have equal length")
    pairs = [(a, b) for a, b in zip(r1, r2) if a is not None and b is not None]
    n = len(pairs)
    if n == 0:
        return UNDEFINED
    agree = sum(a == b for a, b in pairs) / n
    m1: dict = {}
    m2: dict = {}
    for a, b in pairs:
        m1[a] = m1.get(a, 0) + 1
        m2[b] = m2.get(b, 0) + 1
    p_e = sum(c * m2.get(cat, 0) for cat, c in m1.items()) / (n * n)
    if p_e >= 1.0:
        return KappaResult(None, False, 0, n)
    return KappaResult((agree - p_e) / (1.0 - p_e), True, 1, n)


def avg_pairwise_kappa(matrix: RatingMatrix) -> KappaResult:
    """Mean Cohen's kappa over all rater pairs whose kappa is defined."""
    values = []
    for i, j in combinations(range(matrix.n_raters), 2):
        res = cohen_kappa_pair(matrix.column(i), matrix.column(j))
        if res.defined:
            values.append(res.value)
    if not values:
        return KappaResult(None, False, 0, len(matrix.ratings))
    return KappaResult(sum(values) / len(values), True, len(values), len(matrix.ratings))


def _rater_columns(groups: Mapping[str, list[AnnotationRecord]], rater_key: str):
    if rater_key not in RATER_KEYS:
        raise InputError(f"rater_key must be one of {RATER_KEYS}, got {rater_key!r}")
    if rater_key == "slot":
        width = max(len(rs) for rs in groups.values())
        return list(range(width)), lambda pos, rec: pos
    raters: dict[str, None] = {}
    for rs in groups.values():
        for r in rs:
            raters.setdefault(r.annotator_id, None)
    return list(raters), lambda pos, rec: rec.annotator_id


def rating_matrix(
    records: Iterable[AnnotationRecord],
    value,
    categories: Sequence[Hashable],
    rater_key: str = "annotator",
) -> RatingMatrix:
    """Pivot records into a rating matrix; ``value(record)`` extracts the rating.

    With ``rater_key="annotator"`` columns are annotator ids; with ``"slot"``
    column j is the j-th annotator of each sample in file order.
    """
    groups = group_by_sample(records)
    if not groups:
        raise InputError("no annotation records")
    columns, key = _rater_columns(groups, rater_key)
    col_index = {c: j for j, c in enumerate(columns)}
    rows = []
    for sid, rs in groups.items():
        row: list = [None] * len(columns)
        for pos, rec in enumerate(rs):
            j = col_index[key(pos, rec)]
            if row[j] is not None:
                raise InputError(f"sample {sid!r}: annotator {rec.annotator_id!r} rated it twice")
            row[j] = value(rec)
        rows.append(tuple(row))
    return RatingMatrix(tuple(rows), tuple(categories))


def q1_kappa(records: Sequence[AnnotationRecord], rater_key: str = "annotator") -> KappaResult:
    return avg_pairwise_kappa(rating_matrix(records, lambda r: r.q1_any_emotion, (False, True), rater_key))


def q2_kappa(records: Sequence[AnnotationRecord], rater_key: str = "annotator") -> KappaResult:
    return avg_pairwise_kappa(rating_matrix(records, lambda r: r.q2_primary, range(K), rater_key))


@dataclass(frozen=True)
class MultiLabelKappa:
    per_emotion: tuple[KappaResult, ...]
    mean: KappaResult


def multilabel_kappa(records: Sequence[AnnotationRecord], rater_key: str = "annotator") -> MultiLabelKappa:
    """Q3 agreement: one binary kappa per emotion, averaged over the defined ones.

    A record with no Q3 answer counts as missing for every emotion.
    """
    per = []
    for e in range(K):
        def present(r, e=e):
            return None if r.q3_all_present is None else e in r.q3_all_present
        per.append(avg_pairwise_kappa(rating_matrix(records, present, (False, True), rater_key)))
    defined = [r for r in per if r.defined]
    if not defined:
        mean = KappaResult(None, False, 0, per[0].n_items)
    else:
        mean = KappaResult(
            sum(r.value for r in defined) / len(defined),
            True,
            sum(r.n_pairs_used for r in defined),
            per[0].n_items,
        )
    return MultiLabelKappa(tuple(per), mean)


# -- highlight overlap -------------------------------------------------------


def span_tokens(transcript: str, spans: Iterable[tuple[int, int]]) -> frozenset[int]:
    """Indices of tokens that share at least one character with any span."""
    toks = token_spans(transcript)
    hit = set()
    for start, end in spans:
        for i, (_, a, b) in enumerate(toks):
            if a < end and start < b:
                hit.add(i)
    return frozenset(hit)


def jaccard(a: frozenset, b: frozenset) -> float:
    if not a and not b:
        return 1.0
    return len(a & b) / len(a | b)


@dataclass(frozen=True)
class PairOverlap:
    sample_id: str
    annotator_a: str
    annotator_b: str
    emotion_a: str
    emotion_b: str
    jaccard: float

    @property
    def same_emotion(self) -> bool:
        return self.emotion_a == self.emotion_b


@dataclass(frozen=True)
class OverlapReport:
    pairs: tuple[PairOverlap, ...]
    mean_same: Optional[float]
    mean_different: Optional[float]

    @property
    def n_same(self) -> int:
        return sum(p.same_emotion for p in self.pairs)

    @property
    def n_different(self) -> int:
        return len(self.pairs) - self.n_same


def _mean(xs: list[float]) -> Optional[float]:
    return sum(xs) / len(xs) if xs else None


def highlight_overlap(records: Iterable[AnnotationRecord], samples: Mapping[str, Sample]) -> OverlapReport:
    """Token-level Jaccard between annotators' highlight spans, per sample.

    The emotion a highlight supports is ``q4_emotion``, falling back to the
    annotator's Q2 answer. Samples with fewer than two highlighters are skipped.
    """
    pairs = []
    for sid, rs in group_by_sample(records).items():
        hl = [r for r in rs if r.q4_spans]
        if len(hl) < 2:
            continue
        text = samples[sid].transcript
        toks = {r.annotator_id: span_tokens(text, r.q4_spans) for r in hl}
        for a, b in combinations(hl, 2):
            ea = a.q4_emotion if a.q4_emotion is not None else a.q2_primary
            eb = b.q4_emotion if b.q4_emotion is not None else b.q2_primary
            pairs.append(
                PairOverlap(sid, a.annotator_id, b.annotator_id, EMOTIONS[ea], EMOTIONS[eb],
                            jaccard(toks[a.annotator_id], toks[b.annotator_id]))
            )
    same = [p.jaccard for p in pairs if p.same_emotion]
    diff = [p.jaccard for p in pairs if not p.same_emotion]
    return OverlapReport(tuple(pairs), _mean(same), _mean(diff))
