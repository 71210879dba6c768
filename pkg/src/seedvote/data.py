"""Domain types, annotation ingestion, gold-label aggregation and fold assignment."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass
from typing import Iterable, Mapping, Optional, Sequence

import numpy as np

from seedvote.errors import InputError

# Canonical order; index order doubles as the tie-break order everywhere.
EMOTIONS: tuple[str, ...] = ("happiness", "sadness", "anger", "fear", "disgust", "surprise")
EMOTION_TO_IDX: dict[str, int] = {e: i for i, e in enumerate(EMOTIONS)}
K: int = len(EMOTIONS)

ANNOTATION_COLUMNS = ("sample_id", "annotator_id", "q1", "q2", "q3", "q4_emotion", "q4_spans")
TRANSCRIPT_COLUMNS = ("sample_id", "transcript")


def emotion_index(token: str) -> int:
    try:
        return EMOTION_TO_IDX[token.strip().lower()]
    except KeyError:
        raise InputError(f"unknown emotion {token.strip()!r}") from None


def emotion_name(idx: int) -> str:
    if not 0 <= idx < K:
        raise InputError(f"emotion index {idx} out of range [0, {K})")
    return EMOTIONS[idx]


@dataclass(frozen=True)
class Sample:
    sample_id: str
    transcript: str


@dataclass(frozen=True)
class AnnotationRecord:
    """One annotator's survey answers for one sample.

    ``q3_all_present`` and the two q4 fields are ``None`` when the cell was
    left empty. Spans are half-open character ranges into the transcript.
    """

    sample_id: str
    annotator_id: str
    q1_any_emotion: bool
    q2_primary: int
    q3_all_present: Optional[frozenset[int]] = None
    q4_emotion: Optional[int] = None
    q4_spans: Optional[tuple[tuple[int, int], ...]] = None


@dataclass(frozen=True)
class LabeledExample:
    sample_id: str
    gold: int
    true_dist: Optional[np.ndarray] = None
    disagreement: Optional[float] = None
    tie_flag: bool = False

    def __post_init__(self):
        if (self.true_dist is None) != (self.disagreement is None):
            raise ValueError("disagreement must be present iff true_dist is present")


@dataclass(frozen=True)
class FoldAssignment:
    repeat_index: int
    fold_index: int
    sample_ids: tuple[str, ...]


def check_distribution(p, atol: float = 1e-9) -> np.ndarray:
    """Validate a probability vector over the K emotions and return it as float64."""
    p = np.asarray(p, dtype=np.float64)
    if p.shape != (K,):
        raise ValueError(f"distribution must have shape ({K},), got {p.shape}")
    if np.any(p < 0) or np.any(p > 1) or abs(p.sum() - 1.0) > atol:
        raise ValueError(f"not a probability distribution: {p.tolist()}")
    return p


def normalized_entropy(p: np.ndarray) -> float:
    """Shannon entropy of ``p`` in nats divided by ln K, over nonzero entries."""
    nz = p[p > 0]
    h = -float(np.sum(nz * np.log(nz))) / math.log(len(p))
    # Clamp rounding noise at the two ends.
    return min(max(h, 0.0), 1.0)


# -- ingestion ---------------------------------------------------------------


def parse_transcripts(csv_text: str) -> dict[str, Sample]:
    reader = csv.reader(io.StringIO(csv_text))
    header = next(reader, None)
    if header is None or tuple(h.strip() for h in header) != TRANSCRIPT_COLUMNS:
        raise InputError(f"transcripts header must be {','.join(TRANSCRIPT_COLUMNS)}")
    samples: dict[str, Sample] = {}
    for rowno, row in enumerate(reader, start=2):
        if not row:
            continue
        if len(row) != 2:
            raise InputError(f"transcripts row {rowno}: expected 2 columns, got {len(row)}")
        sid, text = row[0].strip(), row[1]
        if not sid:
            raise InputError(f"transcripts row {rowno}: empty sample_id")
        if sid in samples:
            raise InputError(f"transcripts row {rowno}: duplicate sample_id {sid!r}")
        samples[sid] = Sample(sid, text)
    return samples


def _parse_bool(cell: str, rowno: int) -> bool:
    v = cell.strip().lower()
    if v == "yes":
        return True
    if v == "no":
        return False
    raise InputError(f"annotations row {rowno}: q1 must be 'yes' or 'no', got {cell!r}")


def _parse_spans(cell: str, sample: Sample, rowno: int) -> tuple[tuple[int, int], ...]:
    spans = []
    n = len(sample.transcript)
    for tok in cell.split(";"):
        tok = tok.strip()
        if not tok:
            continue
        try:
            a, b = tok.split("-")
            start, end = int(a), int(b)
        except ValueError:
            raise InputError(f"annotations row {rowno}: malformed span {tok!r}") from None
        if not 0 <= start < end <= n:
            raise InputError(
                f"annotations row {rowno}: span {start}-{end} out of bounds for sample "
                f"{sample.sample_id!r} (transcript length {n})"
            )
        spans.append((start, end))
    return tuple(spans)


def parse_annotations(csv_text: str, samples: Mapping[str, Sample]) -> list[AnnotationRecord]:
    """Parse an annotations CSV into records, validating spans against ``samples``."""
    reader = csv.reader(io.StringIO(csv_text))
    header = next(reader, None)
    if header is None or tuple(h.strip() for h in header) != ANNOTATION_COLUMNS:
        raise InputError(f"annotations header must be {','.join(ANNOTATION_COLUMNS)}")
    records = []
    for rowno, row in enumerate(reader, start=2):
        if not row:
            continue
        if len(row) != len(ANNOTATION_COLUMNS):
            raise InputError(
                f"annotations row {rowno}: expected {len(ANNOTATION_COLUMNS)} columns, got {len(row)}"
            )
        sid, aid, q1, q2, q3, q4e, q4s = row
        sid = sid.strip()
        if sid not in samples:
            raise InputError(f"annotations row {rowno}: unknown sample_id {sid!r}")
        if not aid.strip():
            raise InputError(f"annotations row {rowno}: empty annotator_id")
        q3_set = None
        if q3.strip():
            q3_set = frozenset(emotion_index(t) for t in q3.split(";") if t.strip())
        records.append(
            AnnotationRecord(
                sample_id=sid,
                annotator_id=aid.strip(),
                q1_any_emotion=_parse_bool(q1, rowno),
                q2_primary=emotion_index(q2),
                q3_all_present=q3_set,
                q4_emotion=emotion_index(q4e) if q4e.strip() else None,
                q4_spans=_parse_spans(q4s, samples[sid], rowno) if q4s.strip() else None,
            )
        )
    return records


def format_annotations(records: Iterable[AnnotationRecord]) -> str:
    """Inverse of :func:`parse_annotations`; q3 tokens are written in canonical order."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(ANNOTATION_COLUMNS)
    for r in records:
        w.writerow(
            [
                r.sample_id,
                r.annotator_id,
                "yes" if r.q1_any_emotion else "no",
                EMOTIONS[r.q2_primary],
                "" if r.q3_all_present is None else ";".join(EMOTIONS[i] for i in sorted(r.q3_all_present)),
                "" if r.q4_emotion is None else EMOTIONS[r.q4_emotion],
                "" if r.q4_spans is None else ";".join(f"{a}-{b}" for a, b in r.q4_spans),
            ]
        )
    return buf.getvalue()


def format_transcripts(samples: Iterable[Sample]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(TRANSCRIPT_COLUMNS)
    for s in samples:
        w.writerow([s.sample_id, s.transcript])
    return buf.getvalue()


# -- aggregation -------------------------------------------------------------


def vote_counts(labels: Iterable[int]) -> np.ndarray:
    counts = np.zeros(K, dtype=np.int64)
    for lab in labels:
        counts[lab] += 1
    return counts


def aggregate_gold(records: Sequence[AnnotationRecord]) -> LabeledExample:
    """Collapse one sample's Q2 votes into a plurality gold label.

    Ties go to the lowest canonical index and set ``tie_flag``.
    """
    if not records:
        raise InputError("cannot aggregate an empty record list")
    sid = records[0].sample_id
    if any(r.sample_id != sid for r in records):
        raise InputError("records passed to aggregate_gold must share one sample_id")
    counts = vote_counts(r.q2_primary for r in records)
    top = counts.max()
    gold = int(np.argmax(counts))  # first maximum = lowest canonical index
    dist = counts / counts.sum()
    return LabeledExample(
        sample_id=sid,
        gold=gold,
        true_dist=dist,
        disagreement=normalized_entropy(dist),
        tie_flag=bool(np.count_nonzero(counts == top) >= 2),
    )


def group_by_sample(records: Iterable[AnnotationRecord]) -> dict[str, list[AnnotationRecord]]:
    """Group records by sample, preserving first-appearance order of samples and rows."""
    groups: dict[str, list[AnnotationRecord]] = {}
    for r in records:
        groups.setdefault(r.sample_id, []).append(r)
    return groups


def aggregate_all(records: Iterable[AnnotationRecord]) -> list[LabeledExample]:
    return [aggregate_gold(rs) for rs in group_by_sample(records).values()]


def format_gold(examples: Iterable[LabeledExample]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["sample_id", "gold", *(f"p_{e}" for e in EMOTIONS), "disagreement", "tie_flag"])
    for ex in examples:
        dist = ex.true_dist if ex.true_dist is not None else [""] * K
        w.writerow(
            [
                ex.sample_id,
                EMOTIONS[ex.gold],
                *(repr(float(p)) if p != "" else "" for p in dist),
                "" if ex.disagreement is None else repr(float(ex.disagreement)),
                "true" if ex.tie_flag else "false",
            ]
        )
    return buf.getvalue()


def parse_gold_labels(csv_text: str) -> list[LabeledExample]:
    """Read single-label data: a CSV with at least ``sample_id`` and ``gold`` columns.

    Any other columns (such as the distribution columns :func:`format_gold`
    writes) are ignored, so the result never carries annotator-level targets.
    """
    reader = csv.DictReader(io.StringIO(csv_text))
    if reader.fieldnames is None or not {"sample_id", "gold"} <= set(reader.fieldnames):
        raise InputError("gold-label CSV needs 'sample_id' and 'gold' columns")
    out, seen = [], set()
    for rowno, row in enumerate(reader, start=2):
        sid = (row["sample_id"] or "").strip()
        if not sid:
            raise InputError(f"gold row {rowno}: empty sample_id")
        if sid in seen:
            raise InputError(f"gold row {rowno}: duplicate sample_id {sid!r}")
        seen.add(sid)
        out.append(LabeledExample(sid, emotion_index(row["gold"] or "")))
    return out


# -- folds -------------------------------------------------------------------


def make_folds(sample_ids: Sequence[str], k: int, repeats: int, seed: int) -> list[FoldAssignment]:
    """Assign samples to ``k`` folds for each of ``repeats`` independent shuffles.

    Repeat ``r`` shuffles with a generator seeded from ``(seed, r)``; fold
    sizes differ by at most one.
    """
    if k < 2:
        raise InputError("k must be >= 2")
    if repeats < 1:
        raise InputError("repeats must be >= 1")
    if len(sample_ids) < k:
        raise InputError(f"need at least k={k} samples, got {len(sample_ids)}")
    if len(set(sample_ids)) != len(sample_ids):
        raise InputError("sample_ids must be unique")
    ids = list(sample_ids)
    out = []
    for r in range(repeats):
        rng = np.random.default_rng([seed, r])
        order = rng.permutation(len(ids))
        for f, chunk in enumerate(np.array_split(order, k)):
            out.append(FoldAssignment(r, f, tuple(ids[i] for i in chunk)))
    return out
