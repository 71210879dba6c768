"""Command-line interface: ``seedvote <command> --config run.json [--output DIR]``.

Exit codes: 0 success, 1 internal error, 2 usage or input error.
"""

from __future__ import annotations

import argparse
import copy
import csv
import io
import json
import sys
from pathlib import Path
from typing import Optional

from seedvote import agreement
from seedvote.bundle import load_bundle, save_bundle
from seedvote.data import (
    EMOTIONS,
    aggregate_all,
    format_annotations,
    format_gold,
    format_transcripts,
    parse_annotations,
    parse_gold_labels,
    parse_transcripts,
)
from seedvote.encoder import EncoderConfig, encode_samples
from seedvote.ensemble import (
    MODEL_KINDS,
    BnnConfig,
    EnsembleConfig,
    FeatureDataset,
    ModelConfig,
    MultiTaskConfig,
    fit_model,
    model_outputs,
)
from seedvote.errors import InputError
from seedvote.eval.cv import run_cv
from seedvote.eval.report import distributions_doc, folds_csv, report_csv
from seedvote.eval.synth import SynthConfig, generate_synthetic
from seedvote.fileio import dumps_json, read_text, write_atomic
from seedvote.heads import TrainConfig

DEFAULTS: dict = {
    "data": {"transcripts": None, "annotations": None, "gold": None, "embeddings": None},
    "encoder": {"kind": "hashed", "d": 256, "ngrams": [1, 2]},
    "train": {"lr": 1e-3, "epochs": 3, "batch_size": 32, "seeds": {"master": 0, "data_order": 0}},
    "model": {
        "kind": "seed_ensemble",
        "n": 5,
        "aggregation": "vote_histogram",
        "head_seeds": None,
        "bundle": None,
        "bnn": {"prior_sigma": 1.0, "kl_weight": None, "s_train": 1, "s_pred": 30, "rho_init": -5.0, "predict_seed": 0},
        "multitask": {"loss_weight": 1.0},
    },
    "eval": {"k": 5, "repeats": 5, "seed": 0, "models": None, "workers": 1},
    "agreement": {"rater_key": "annotator"},
    "synth": {
        "n_samples": 500,
        "n_annotators": 5,
        "vocab_per_class": 20,
        "segment_length": 6,
        "attention_bias_strength": 0.8,
        "label_noise": 0.1,
        "seed": 0,
    },
    "output": {"dir": "out", "formats": ["csv", "json"]},
}

# Keys whose values are filesystem paths, resolved relative to the config file.
PATH_KEYS = (("data", "transcripts"), ("data", "annotations"), ("data", "gold"), ("data", "embeddings"), ("model", "bundle"), ("output", "dir"))


def _merge(defaults: dict, user: dict, prefix: str) -> dict:
    if not isinstance(user, dict):
        raise InputError(f"config section {prefix or '<root>'!r} must be an object")
    out = copy.deepcopy(defaults)
    for key, value in user.items():
        name = f"{prefix}.{key}" if prefix else key
        if key not in defaults:
            raise InputError(f"unknown config key {name!r}")
        if isinstance(defaults[key], dict):
            out[key] = _merge(defaults[key], value, name)
        else:
            out[key] = value
    return out


def resolve_config(user: dict, base_dir: Path = Path("."), output: Optional[str] = None) -> dict:
    """Apply defaults, reject unknown keys and make paths absolute."""
    cfg = _merge(DEFAULTS, user, "")
    if output is not None:
        cfg["output"]["dir"] = output
    for section, key in PATH_KEYS:
        v = cfg[section][key]
        if v is not None:
            p = Path(v)
            cfg[section][key] = str(p if p.is_absolute() else (base_dir / p).resolve())
    bad = set(cfg["output"]["formats"]) - {"csv", "json"}
    if bad:
        raise InputError(f"output.formats: unsupported format {sorted(bad)[0]!r}")
    return cfg


def load_config(path: str, output: Optional[str] = None) -> dict:
    text = read_text(path, "config file")
    try:
        user = json.loads(text)
    except json.JSONDecodeError as e:
        raise InputError(f"config file {path!r} is not valid JSON: {e}") from None
    return resolve_config(user, Path(path).resolve().parent, output)


# -- config -> typed objects ------------------------------------------------


def train_config(cfg: dict) -> TrainConfig:
    t = cfg["train"]
    return TrainConfig(
        learning_rate=float(t["lr"]),
        epochs=int(t["epochs"]),
        batch_size=int(t["batch_size"]),
        master_seed=int(t["seeds"]["master"]),
        data_order_seed=int(t["seeds"]["data_order"]),
    )


def model_config(cfg: dict, kind: Optional[str] = None) -> ModelConfig:
    m = cfg["model"]
    seeds = m["head_seeds"]
    ens = EnsembleConfig(
        n=int(m["n"]),
        master_seed=int(cfg["train"]["seeds"]["master"]),
        head_seeds=None if seeds is None else tuple(int(s) for s in seeds),
        aggregation=m["aggregation"],
    )
    return ModelConfig(
        kind=kind or m["kind"],
        ensemble=ens,
        bnn=BnnConfig(**m["bnn"]),
        multitask=MultiTaskConfig(**m["multitask"]),
    )


def encoder_config(cfg: dict) -> EncoderConfig:
    e = cfg["encoder"]
    return EncoderConfig(
        kind=e["kind"],
        d=int(e["d"]),
        ngram_orders=tuple(int(n) for n in e["ngrams"]),
        embeddings_path=cfg["data"]["embeddings"] if e["kind"] == "precomputed" else None,
    )


def _require(cfg: dict, section: str, key: str) -> str:
    v = cfg[section][key]
    if v is None:
        raise InputError(f"config key {section}.{key} is required for this command")
    return v


def load_inputs(cfg: dict, need_annotations: bool = True):
    samples = parse_transcripts(read_text(_require(cfg, "data", "transcripts"), "transcripts file"))
    records = []
    if need_annotations:
        records = parse_annotations(read_text(_require(cfg, "data", "annotations"), "annotations file"), samples)
    return samples, records


def build_dataset(cfg: dict) -> FeatureDataset:
    """Annotator-level data when ``data.annotations`` is set, else single gold labels from ``data.gold``."""
    if cfg["data"]["annotations"] is None and cfg["data"]["gold"] is not None:
        samples, _ = load_inputs(cfg, need_annotations=False)
        examples = parse_gold_labels(read_text(cfg["data"]["gold"], "gold-label file"))
        unknown = [ex.sample_id for ex in examples if ex.sample_id not in samples]
        if unknown:
            raise InputError(f"gold-label file references unknown sample_id {unknown[0]!r}")
    else:
        samples, records = load_inputs(cfg)
        examples = aggregate_all(records)
    if not examples:
        raise InputError("no labelled samples in the input data")
    ids = [ex.sample_id for ex in examples]
    X = encode_samples(ids, {s: v.transcript for s, v in samples.items()}, encoder_config(cfg))
    return FeatureDataset.from_examples(examples, X)


def _outdir(cfg: dict) -> Path:
    return Path(cfg["output"]["dir"])


def _echo_config(cfg: dict, out: Path) -> None:
    write_atomic(out / "config.json", dumps_json(cfg))


# -- commands ----------------------------------------------------------------


def cmd_aggregate(cfg: dict) -> None:
    _, records = load_inputs(cfg)
    out = _outdir(cfg)
    write_atomic(out / "gold.csv", format_gold(aggregate_all(records)))
    _echo_config(cfg, out)


def _kappa_row(question: str, statistic: str, res: agreement.KappaResult) -> list:
    return [question, statistic, repr(res.value) if res.defined else "undefined",
            "true" if res.defined else "false", res.n_pairs_used]


def kappa_csv(records, rater_key: str) -> tuple[str, str]:
    ml = agreement.multilabel_kappa(records, rater_key)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["question", "statistic", "value", "defined", "n_pairs_used"])
    w.writerow(_kappa_row("q1_any_emotion", "avg_pairwise_cohen_kappa", agreement.q1_kappa(records, rater_key)))
    w.writerow(_kappa_row("q2_most_present", "avg_pairwise_cohen_kappa", agreement.q2_kappa(records, rater_key)))
    w.writerow(_kappa_row("q3_all_present", "mean_binary_cohen_kappa", ml.mean))
    per = io.StringIO()
    pw = csv.writer(per, lineterminator="\n")
    pw.writerow(["emotion", "statistic", "value", "defined", "n_pairs_used"])
    for name, res in zip(EMOTIONS, ml.per_emotion):
        pw.writerow(_kappa_row(name, "avg_pairwise_cohen_kappa", res))
    return buf.getvalue(), per.getvalue()


def overlap_csv(report: agreement.OverlapReport) -> tuple[str, str]:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["group", "mean_jaccard", "n_pairs"])
    w.writerow(["same_emotion", "" if report.mean_same is None else repr(report.mean_same), report.n_same])
    w.writerow(["different_emotion", "" if report.mean_different is None else repr(report.mean_different), report.n_different])
    pairs = io.StringIO()
    pw = csv.writer(pairs, lineterminator="\n")
    pw.writerow(["sample_id", "annotator_a", "annotator_b", "emotion_a", "emotion_b", "jaccard"])
    for p in report.pairs:
        pw.writerow([p.sample_id, p.annotator_a, p.annotator_b, p.emotion_a, p.emotion_b, repr(p.jaccard)])
    return buf.getvalue(), pairs.getvalue()


def cmd_kappa(cfg: dict) -> None:
    samples, records = load_inputs(cfg)
    if not records:
        raise InputError("annotations file contains no records")
    out = _outdir(cfg)
    table, per = kappa_csv(records, cfg["agreement"]["rater_key"])
    write_atomic(out / "kappa.csv", table)
    write_atomic(out / "kappa_q3_per_emotion.csv", per)
    if any(r.q4_spans for r in records):
        summary, pairs = overlap_csv(agreement.highlight_overlap(records, samples))
        write_atomic(out / "overlap.csv", summary)
        write_atomic(out / "overlap_pairs.csv", pairs)
    _echo_config(cfg, out)


def cmd_train(cfg: dict) -> None:
    data = build_dataset(cfg)
    model = fit_model(data, model_config(cfg), train_config(cfg), encoder_config(cfg),
                      workers=int(cfg["eval"]["workers"]))
    out = _outdir(cfg)
    save_bundle(model, out / "model")
    _echo_config(cfg, out)


def cmd_eval(cfg: dict) -> None:
    data = build_dataset(cfg)
    kinds = cfg["eval"]["models"] or [cfg["model"]["kind"]]
    for kind in kinds:
        if kind not in MODEL_KINDS:
            raise InputError(f"eval.models: unknown model kind {kind!r}")
    ev = cfg["eval"]
    results = {}
    for kind in kinds:
        results[kind] = run_cv(data, kind, model_config(cfg, kind), train_config(cfg),
                               k=int(ev["k"]), repeats=int(ev["repeats"]), seed=int(ev["seed"]),
                               workers=int(ev["workers"]))
    out = _outdir(cfg)
    formats = cfg["output"]["formats"]
    if "csv" in formats:
        write_atomic(out / "report.csv", report_csv(results))
        write_atomic(out / "folds.csv", folds_csv(results))
    if "json" in formats:
        write_atomic(out / "distributions.json", dumps_json(distributions_doc(results)))
    _echo_config(cfg, out)


def cmd_recover(cfg: dict) -> None:
    model = load_bundle(_require(cfg, "model", "bundle"))
    have_annotations = cfg["data"]["annotations"] is not None
    samples, records = load_inputs(cfg, need_annotations=have_annotations)
    gold = {ex.sample_id: ex for ex in aggregate_all(records)} if records else {}
    ids = list(samples)
    enc = model.encoder_config
    if enc.kind == "precomputed" and cfg["data"]["embeddings"] is not None:
        enc = EncoderConfig("precomputed", enc.d, enc.ngram_orders, cfg["data"]["embeddings"])
    X = encode_samples(ids, {s: v.transcript for s, v in samples.items()}, enc)
    outs = model_outputs(model, X)
    rows = []
    for i, sid in enumerate(ids):
        ex = gold.get(sid)
        rows.append(
            {
                "sample_id": sid,
                "recovered": [float(p) for p in outs.distributions[i]],
                "predicted": EMOTIONS[int(outs.predictions[i])],
                "true": None if ex is None else [float(p) for p in ex.true_dist],
                "gold": None if ex is None else EMOTIONS[ex.gold],
                "disagreement": None if outs.disagreement is None else float(outs.disagreement[i]),
            }
        )
    out = _outdir(cfg)
    write_atomic(out / "recovered.json", dumps_json(rows))
    _echo_config(cfg, out)


def cmd_synth(cfg: dict) -> None:
    ds = generate_synthetic(SynthConfig(**cfg["synth"]))
    out = _outdir(cfg)
    write_atomic(out / "transcripts.csv", format_transcripts(ds.samples))
    write_atomic(out / "annotations.csv", format_annotations(ds.records))
    write_atomic(out / "gold.csv", format_gold(ds.examples))
    _echo_config(cfg, out)


COMMANDS = {
    "aggregate": (cmd_aggregate, "aggregate annotator votes into gold labels and distributions"),
    "kappa": (cmd_kappa, "inter-rater agreement per survey question and highlight overlap"),
    "train": (cmd_train, "train a model on the full dataset and write a model bundle"),
    "eval": (cmd_eval, "repeated k-fold cross-validation of one or more model kinds"),
    "recover": (cmd_recover, "recover per-sample label distributions with a saved bundle"),
    "synth": (cmd_synth, "generate a synthetic two-segment dataset"),
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="seedvote", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name, (_, help_text) in COMMANDS.items():
        p = sub.add_parser(name, help=help_text, description=help_text)
        p.add_argument("--config", required=True, help="path to the JSON run configuration")
        p.add_argument("--output", help="output directory (overrides output.dir)")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config, args.output)
        COMMANDS[args.command][0](cfg)
    except InputError as e:
        print(f"seedvote {args.command}: error: {e}", file=sys.stderr)
        return 2
    except Exception as e:  # noqa: BLE001 - top-level guard maps to exit 1
        print(f"seedvote {args.command}: internal error: {type(e).__name__}: {e}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
