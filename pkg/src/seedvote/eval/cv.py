"""Repeated k-fold cross-validation over any model kind."""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Optional

import numpy as np

from seedvote.data import make_folds
from seedvote.ensemble import FeatureDataset, ModelConfig, run_model
from seedvote.errors import InputError
from seedvote.eval.metrics import MetricReport, metric_report
from seedvote.heads import TrainConfig

METRICS = ("accuracy", "macro_f1", "mean_tv", "mean_js")


@dataclass(frozen=True)
class SampleOutcome:
    repeat: int
    fold: int
    sample_id: str
    gold: int
    predicted: int
    recovered: np.ndarray
    true: Optional[np.ndarray]
    disagreement: Optional[float] = None


@dataclass(frozen=True)
class CvCell:
    repeat: int
    fold: int
    test_ids: tuple[str, ...]
    report: MetricReport


@dataclass(frozen=True)
class CvResult:
    cells: tuple[CvCell, ...]
    outcomes: tuple[SampleOutcome, ...]
    # metric -> (mean, std) over cells; population std. None when undefined for the data.
    aggregate: dict[str, tuple[Optional[float], Optional[float]]]


def _aggregate(cells) -> dict:
    out = {}
    for m in METRICS:
        vals = [c.report.scalars()[m] for c in cells]
        if any(v is None for v in vals):
            out[m] = (None, None)
        else:
            arr = np.array(vals, dtype=np.float64)
            out[m] = (float(arr.mean()), float(arr.std()))
    return out


def run_cv(
    dataset: FeatureDataset,
    kind: str,
    model_config: Optional[ModelConfig] = None,
    train_config: TrainConfig = TrainConfig(),
    k: int = 5,
    repeats: int = 5,
    seed: int = 0,
    *,
    workers: int = 1,
) -> CvResult:
    """Train on k-1 folds and score the held-out fold, for every fold of every repeat.

    Metrics are computed per fold and then averaged. Cells may run in
    parallel; the result does not depend on completion order.
    """
    if len(dataset) < k:
        raise InputError(f"dataset has {len(dataset)} samples, fewer than k={k}")
    folds = make_folds(list(dataset.sample_ids), k, repeats, seed)
    pos = {sid: i for i, sid in enumerate(dataset.sample_ids)}

    def cell(fa):
        test_idx = np.array([pos[s] for s in fa.sample_ids], dtype=np.int64)
        mask = np.ones(len(dataset), dtype=bool)
        mask[test_idx] = False
        train, test = dataset.subset(np.flatnonzero(mask)), dataset.subset(test_idx)
        out = run_model(kind, train, test, model_config, train_config)
        report = metric_report(out.predictions, test.gold, out.distributions, test.true_dist)
        outcomes = tuple(
            SampleOutcome(
                repeat=fa.repeat_index,
                fold=fa.fold_index,
                sample_id=sid,
                gold=int(test.gold[i]),
                predicted=int(out.predictions[i]),
                recovered=out.distributions[i],
                true=None if test.true_dist is None else test.true_dist[i],
                disagreement=None if out.disagreement is None else float(out.disagreement[i]),
            )
            for i, sid in enumerate(test.sample_ids)
        )
        return CvCell(fa.repeat_index, fa.fold_index, fa.sample_ids, report), outcomes

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(cell, folds))
    else:
        results = [cell(fa) for fa in folds]
    cells = tuple(c for c, _ in results)
    outcomes = tuple(o for _, os in results for o in os)
    return CvResult(cells, outcomes, _aggregate(cells))
