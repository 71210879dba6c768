"""Render cross-validation results as a model-by-metric CSV or per-sample JSON."""

from __future__ import annotations

import csv
import io
import json
from typing import Mapping

from seedvote.data import EMOTIONS, K
from seedvote.errors import InputError
from seedvote.eval.cv import METRICS, CvResult
from seedvote.fileio import dumps_json, write_atomic

REPORT_COLUMNS = ("model", "metric", "mean", "std")
FOLD_COLUMNS = ("model", "repeat", "fold", "n_test", *METRICS)

_prob_vector = {"type": "array", "items": {"type": "number", "minimum": 0, "maximum": 1}, "minItems": K, "maxItems": K}

DISTRIBUTIONS_SCHEMA = {
    "type": "array",
    "items": {
        "type": "object",
        "required": ["sample_id", "true", "recovered", "predicted", "gold"],
        "properties": {
            "sample_id": {"type": "string"},
            "model": {"type": "string"},
            "repeat": {"type": "integer", "minimum": 0},
            "fold": {"type": "integer", "minimum": 0},
            "true": {"oneOf": [_prob_vector, {"type": "null"}]},
            "recovered": _prob_vector,
            "predicted": {"enum": list(EMOTIONS)},
            "gold": {"enum": list(EMOTIONS)},
            "disagreement": {"type": ["number", "null"]},
        },
        "additionalProperties": False,
    },
}


def _num(x) -> str:
    return "" if x is None else repr(float(x))


def report_csv(results: Mapping[str, CvResult]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(REPORT_COLUMNS)
    for model, res in results.items():
        for m in METRICS:
            mean, std = res.aggregate[m]
            w.writerow([model, m, _num(mean), _num(std)])
    return buf.getvalue()


def folds_csv(results: Mapping[str, CvResult]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(FOLD_COLUMNS)
    for model, res in results.items():
        for c in res.cells:
            s = c.report.scalars()
            w.writerow([model, c.repeat, c.fold, len(c.test_ids), *(_num(s[m]) for m in METRICS)])
    return buf.getvalue()


def distributions_doc(results: Mapping[str, CvResult]) -> list[dict]:
    rows = []
    for model, res in results.items():
        for o in res.outcomes:
            rows.append(
                {
                    "model": model,
                    "repeat": o.repeat,
                    "fold": o.fold,
                    "sample_id": o.sample_id,
                    "true": None if o.true is None else [float(x) for x in o.true],
                    "recovered": [float(x) for x in o.recovered],
                    "predicted": EMOTIONS[o.predicted],
                    "gold": EMOTIONS[o.gold],
                    "disagreement": o.disagreement,
                }
            )
    return rows


def emit_report(results: Mapping[str, CvResult], fmt: str, path):
    """Write the metric table (``csv``) or per-sample distributions (``json``) to ``path``."""
    if not results:
        raise InputError("no results to report")
    if fmt == "csv":
        return write_atomic(path, report_csv(results))
    if fmt == "json":
        return write_atomic(path, dumps_json(distributions_doc(results)))
    raise InputError(f"report format must be 'csv' or 'json', got {fmt!r}")


def parse_report_csv(text: str) -> dict[tuple[str, str], tuple]:
    reader = csv.DictReader(io.StringIO(text))
    out = {}
    for row in reader:
        mean = float(row["mean"]) if row["mean"] else None
        std = float(row["std"]) if row["std"] else None
        out[(row["model"], row["metric"])] = (mean, std)
    return out


def load_distributions(text: str) -> list[dict]:
    return json.loads(text)
