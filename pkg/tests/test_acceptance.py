"""Exit criteria. Each test prints one PASS/FAIL line (collected in the terminal summary)."""

import json
import shutil
from itertools import combinations

import numpy as np
import pytest

from seedvote.agreement import RatingMatrix, avg_pairwise_kappa, cohen_kappa_pair
from seedvote.cli import main
from seedvote.data import K, make_folds
from seedvote.encoder import EncoderConfig, encode_samples
from seedvote.ensemble import EnsembleConfig, FeatureDataset, ModelConfig, head_argmaxes, run_model, train_ensemble
from seedvote.eval.cv import METRICS, run_cv
from seedvote.eval.metrics import accuracy, js_divergence, metric_report, tv_distance
from seedvote.eval.synth import SynthConfig, generate_synthetic, label_mixture
from seedvote.heads import (
    BnnParams,
    HeadParams,
    MultiTaskParams,
    TrainConfig,
    bnn_elbo_grad,
    bnn_kl,
    bnn_predict,
    ce_loss_grad,
    forward,
    kl_terms,
    multitask_loss_grad,
    train_head,
)

from conftest import ACCEPTANCE_LINES, numeric_grad, rel_err

pytestmark = pytest.mark.acceptance

N_TRIALS = 20


def record(number, name, passed, detail):
    line = f"[{'PASS' if passed else 'FAIL'}] criterion {number:>2}: {name} ({detail})"
    ACCEPTANCE_LINES.append(line)
    print(line)
    assert passed, line


# -- 1 -----------------------------------------------------------------------


def pairwise_oracle(rows, n_raters):
    """Confusion-table Cohen's kappa per rater pair, averaged over defined pairs."""
    vals = []
    for i, j in combinations(range(n_raters), 2):
        pairs = [(r[i], r[j]) for r in rows if r[i] is not None and r[j] is not None]
        if not pairs:
            continue
        cats = sorted({c for p in pairs for c in p})
        t = np.zeros((len(cats), len(cats)))
        for a, b in pairs:
            t[cats.index(a), cats.index(b)] += 1
        t /= t.sum()
        pe = float(t.sum(axis=1) @ t.sum(axis=0))
        if pe == 1.0:
            continue
        vals.append((np.trace(t) - pe) / (1 - pe))
    return sum(vals) / len(vals) if vals else None


def test_c1_kappa_oracle_equivalence():
    rng = np.random.default_rng(2024)
    worst, mismatched = 0.0, 0
    for _ in range(200):
        n_raters, n_items, n_cats = rng.integers(2, 7), rng.integers(1, 31), rng.integers(2, 7)
        miss = rng.uniform(0, 0.2)
        rows = tuple(
            tuple(None if rng.random() < miss else int(rng.integers(n_cats)) for _ in range(n_raters))
            for _ in range(n_items)
        )
        got = avg_pairwise_kappa(RatingMatrix(rows, tuple(range(n_cats))))
        want = pairwise_oracle(rows, n_raters)
        if want is None:
            mismatched += got.defined
        elif not got.defined:
            mismatched += 1
        else:
            worst = max(worst, abs(got.value - want))
    hand = cohen_kappa_pair(list("AABB"), list("ABBB")).value
    record(1, "kappa oracle equivalence", worst <= 1e-12 and mismatched == 0 and hand == 0.5,
           f"max |diff|={worst:.2e} over 200 instances, definedness mismatches={mismatched}, hand fixture={hand}")


# -- 2 -----------------------------------------------------------------------


def _ce_case(rng, soft):
    d, B = rng.integers(2, 9), rng.integers(1, 5)
    p = HeadParams(rng.normal(size=(K, d)), rng.normal(size=K))
    X = rng.normal(size=(B, d))
    T = rng.dirichlet(np.ones(K), size=B) if soft else rng.integers(K, size=B)
    _, g = ce_loss_grad(p, X, T)
    num = numeric_grad(lambda a: ce_loss_grad(HeadParams.from_arrays(a), X, T)[0], p.arrays())
    return rel_err(g.arrays(), num)


def _mt_case(rng):
    d, B = rng.integers(2, 9), rng.integers(1, 5)
    mt = MultiTaskParams(HeadParams(rng.normal(size=(K, d)), rng.normal(size=K)), rng.normal(size=d),
                         float(rng.normal()), float(rng.uniform(0.1, 2)))
    X, y, t = rng.normal(size=(B, d)), rng.integers(K, size=B), rng.uniform(size=B)
    _, g = multitask_loss_grad(mt, X, y, t)
    num = numeric_grad(lambda a: multitask_loss_grad(mt.with_arrays(a), X, y, t)[0], mt.arrays())
    return rel_err(g, num)


def _elbo_case(rng):
    d, B = rng.integers(2, 9), rng.integers(1, 5)
    bnn = BnnParams(rng.normal(scale=0.5, size=(K, d)), rng.uniform(-3, 1, size=(K, d)),
                    rng.normal(scale=0.5, size=K), rng.uniform(-3, 1, size=K),
                    prior_sigma=float(rng.uniform(0.5, 2)), kl_weight=float(rng.uniform(0.01, 1)),
                    s_train=int(rng.integers(1, 4)))
    X, y = rng.normal(size=(B, d)), rng.integers(K, size=B)
    seed = int(rng.integers(2**31))
    _, g = bnn_elbo_grad(bnn, X, y, seed)
    num = numeric_grad(lambda a: bnn_elbo_grad(bnn.with_arrays(a), X, y, seed)[0], bnn.arrays())
    return rel_err(g, num)


def test_c2_gradient_correctness():
    rng = np.random.default_rng(7)
    worst = {
        "ce": max(_ce_case(rng, False) for _ in range(50)),
        "soft_ce": max(_ce_case(rng, True) for _ in range(50)),
        "multitask": max(_mt_case(rng) for _ in range(50)),
        "elbo": max(_elbo_case(rng) for _ in range(50)),
    }
    detail = ", ".join(f"{k} max rel err={v:.1e}" for k, v in worst.items())
    record(2, "gradients vs central differences", all(v <= 1e-4 for v in worst.values()), detail)


# -- shared synthetic benchmark ----------------------------------------------


def featurize(ds, d=256):
    ids = [s.sample_id for s in ds.samples]
    return FeatureDataset.from_examples(ds.examples, encode_samples(ids, ds.transcripts, EncoderConfig(d=d)))


def holdout(data, seed):
    test_ids = set(make_folds(list(data.sample_ids), 5, 1, seed)[0].sample_ids)
    test = [i for i, s in enumerate(data.sample_ids) if s in test_ids]
    train = [i for i, s in enumerate(data.sample_ids) if s not in test_ids]
    return data.subset(train), data.subset(test)


@pytest.fixture(scope="module")
def benchmark():
    """Per trial: default synthetic data, default training, 5-head ensemble vs single head."""
    rows = []
    for t in range(N_TRIALS):
        data = featurize(generate_synthetic(SynthConfig(seed=t)))
        train, test = holdout(data, seed=t)
        tc = TrainConfig(data_order_seed=t)
        mc = ModelConfig(ensemble=EnsembleConfig(n=5, master_seed=1000 * t))
        ens = run_model("seed_ensemble", train, test, mc, tc)
        single = run_model("single", train, test, mc, tc)
        model = train_ensemble(train.X, train.gold, tc, mc.ensemble)
        votes = head_argmaxes(model, test.X)
        marginals = np.stack([np.bincount(v, minlength=K) / len(v) for v in votes])
        twin_a = train_head(train.X, train.gold, tc, 1000 * t)
        twin_b = train_head(train.X, train.gold, tc, 1000 * t)
        rows.append(
            {
                "tv_ens": np.mean([tv_distance(a, b) for a, b in zip(ens.distributions, test.true_dist)]),
                "tv_single": np.mean([tv_distance(a, b) for a, b in zip(single.distributions, test.true_dist)]),
                "acc_ens": accuracy(ens.predictions, test.gold),
                "acc_single": accuracy(single.predictions, test.gold),
                "max_marginal_tv": max(tv_distance(marginals[i], marginals[j]) for i, j in combinations(range(5), 2)),
                "twins_identical": np.array_equal(
                    np.bincount(forward(twin_a, test.X).argmax(axis=1), minlength=K),
                    np.bincount(forward(twin_b, test.X).argmax(axis=1), minlength=K),
                ),
                "outputs": (ens, single),
                "test": test,
            }
        )
    return rows


# -- 3 -----------------------------------------------------------------------


def test_c3_normalization_and_bounds(benchmark):
    data = featurize(generate_synthetic(SynthConfig(n_samples=150, seed=99)), d=64)
    train, test = holdout(data, 99)
    worst_sum, out_of_range = 0.0, 0
    for kind in ("single", "seed_ensemble", "bnn", "ldl", "multitask"):
        out = run_model(kind, train, test, ModelConfig(kind), TrainConfig())
        worst_sum = max(worst_sum, np.max(np.abs(out.distributions.sum(axis=1) - 1)))
        rep = metric_report(out.predictions, test.gold, out.distributions, test.true_dist)
        out_of_range += sum(not 0 <= v <= 1 for v in rep.scalars().values())
    for row in benchmark:
        for out in row["outputs"]:
            worst_sum = max(worst_sum, np.max(np.abs(out.distributions.sum(axis=1) - 1)))
    worst_sum = max(worst_sum, np.max(np.abs(data.true_dist.sum(axis=1) - 1)))
    rng = np.random.default_rng(3)
    bnn = BnnParams(rng.normal(size=(K, 4)), rng.uniform(-4, 2, size=(K, 4)), rng.normal(size=K),
                    rng.uniform(-4, 2, size=K), kl_weight=1.0)
    pred_mean = bnn_predict(bnn, rng.normal(size=(10, 4)), 30, 0).mean
    worst_sum = max(worst_sum, np.max(np.abs(pred_mean.sum(axis=1) - 1)))
    p, q = rng.dirichlet(np.ones(K), size=(2, 200))
    for a, b in zip(p, q):
        out_of_range += not (0 <= tv_distance(a, b) <= 1 and 0 <= js_divergence(a, b) <= 1)
    kl_min = min(bnn_kl(BnnParams(rng.normal(size=(K, 3)), rng.uniform(-5, 3, size=(K, 3)), rng.normal(size=K),
                                  rng.uniform(-5, 3, size=K), prior_sigma=float(rng.uniform(0.2, 3))))
                 for _ in range(200))
    kl_at_prior = kl_terms(np.zeros(10), np.full(10, np.log(np.expm1(1.3))), 1.3)[0]
    passed = worst_sum <= 1e-9 and out_of_range == 0 and kl_min >= 0 and abs(kl_at_prior) <= 1e-12
    record(3, "normalization and bounds", passed,
           f"max |sum-1|={worst_sum:.1e}, metrics out of [0,1]={out_of_range}, min KL={kl_min:.3g}, "
           f"KL at prior={kl_at_prior:.1e}")


# -- 4 -----------------------------------------------------------------------


def test_c4_reduction_exactness():
    data = featurize(generate_synthetic(SynthConfig(n_samples=60, seed=5)), d=64)
    train, test = holdout(data, 5)
    mc = ModelConfig(ensemble=EnsembleConfig(n=1, master_seed=31))
    a = run_model("single", train, test, mc, TrainConfig())
    b = run_model("seed_ensemble", train, test, mc, TrainConfig())
    same_outputs = np.array_equal(a.predictions, b.predictions) and np.array_equal(a.distributions, b.distributions)
    cv_a = run_cv(data, "single", mc, k=5, repeats=2, seed=1)
    cv_b = run_cv(data, "seed_ensemble", mc, k=5, repeats=2, seed=1)
    same_cv = cv_a.aggregate == cv_b.aggregate and [c.report for c in cv_a.cells] == [c.report for c in cv_b.cells]
    same_cv = same_cv and all(
        x.predicted == y.predicted and np.array_equal(x.recovered, y.recovered)
        for x, y in zip(cv_a.outcomes, cv_b.outcomes)
    )
    record(4, "single == seed_ensemble(n=1)", same_outputs and same_cv,
           f"outputs identical={same_outputs}, CvResult identical={same_cv}")


# -- 5, 6 --------------------------------------------------------------------


def test_c5_recovery_advantage(benchmark):
    wins = sum(r["tv_ens"] < r["tv_single"] for r in benchmark)
    acc_e = float(np.mean([r["acc_ens"] for r in benchmark]))
    acc_s = float(np.mean([r["acc_single"] for r in benchmark]))
    tv_e = float(np.mean([r["tv_ens"] for r in benchmark]))
    tv_s = float(np.mean([r["tv_single"] for r in benchmark]))
    record(5, "seed ensemble recovers annotator distributions better", wins >= 16 and acc_e >= acc_s - 0.02,
           f"TV wins {wins}/{N_TRIALS}, mean TV {tv_e:.3f} vs {tv_s:.3f}, mean accuracy {acc_e:.3f} vs {acc_s:.3f}")


def test_c6_annotator_proxy(benchmark):
    diverse = sum(r["max_marginal_tv"] >= 0.05 for r in benchmark)
    twins = all(r["twins_identical"] for r in benchmark)
    record(6, "heads behave as distinct annotators", diverse >= 16 and twins,
           f"max pairwise marginal TV >= 0.05 in {diverse}/{N_TRIALS}, same-seed heads identical={twins}")


# -- 7 -----------------------------------------------------------------------


def _snapshot(directory):
    return {p.relative_to(directory).as_posix(): p.read_bytes()
            for p in sorted(directory.rglob("*")) if p.is_file() and p.suffix in (".csv", ".json")}


def test_c7_cli_determinism(tmp_path):
    def cfg(name, body):
        path = tmp_path / f"{name}.json"
        path.write_text(json.dumps(body))
        return str(path)

    data = {"transcripts": "data/transcripts.csv", "annotations": "data/annotations.csv"}
    commands = [
        ("synth", cfg("synth", {"synth": {"n_samples": 60, "seed": 8}, "output": {"dir": "data"}})),
        ("aggregate", cfg("agg", {"data": data, "output": {"dir": "agg"}})),
        ("kappa", cfg("kappa", {"data": data, "output": {"dir": "kappa"}})),
        ("train", cfg("train", {"data": data, "encoder": {"d": 64}, "output": {"dir": "train"}})),
        ("eval", cfg("eval", {"data": data, "encoder": {"d": 64}, "output": {"dir": "eval"},
                              "eval": {"k": 3, "repeats": 2, "models": ["seed_ensemble", "bnn", "ldl", "multitask"]}})),
        ("recover", cfg("recover", {"data": data, "model": {"bundle": "train/model"}, "output": {"dir": "recover"}})),
    ]
    outdirs = {"synth": "data", "aggregate": "agg", "kappa": "kappa", "train": "train", "eval": "eval", "recover": "recover"}
    codes, first = [], {}
    for name, path in commands:
        codes.append(main([name, "--config", path]))
        first[name] = _snapshot(tmp_path / outdirs[name])
    identical = []
    for name, path in commands:
        if name != "synth":
            shutil.rmtree(tmp_path / outdirs[name])
        codes.append(main([name, "--config", path]))
        identical.append(_snapshot(tmp_path / outdirs[name]) == first[name] and first[name])
    record(7, "CLI reruns are byte-identical", all(c == 0 for c in codes) and all(identical),
           f"exit codes={sorted(set(codes))}, identical payloads {sum(map(bool, identical))}/{len(commands)} commands")


# -- 8 -----------------------------------------------------------------------


def test_c8_cv_integrity():
    data = featurize(generate_synthetic(SynthConfig(n_samples=50, seed=21)), d=64)
    res = run_cv(data, "seed_ensemble", k=5, repeats=5, seed=4)
    counts = {}
    for o in res.outcomes:
        counts[o.sample_id] = counts.get(o.sample_id, 0) + 1
    times_ok = set(counts.values()) == {5} and len(counts) == 50
    disjoint = True
    for r in range(5):
        sets = [set(c.test_ids) for c in res.cells if c.repeat == r]
        disjoint &= sum(map(len, sets)) == len(set().union(*sets)) == 50
    worst = 0.0
    for m in METRICS:
        per_fold = np.mean([c.report.scalars()[m] for c in res.cells])
        worst = max(worst, abs(per_fold - res.aggregate[m][0]))
    record(8, "cross-validation integrity", times_ok and disjoint and worst <= 1e-12 and len(res.cells) == 25,
           f"each sample tested 5x={times_ok}, folds disjoint={disjoint}, max |mean(folds)-aggregate|={worst:.1e}")


# -- 9 -----------------------------------------------------------------------


def test_c9_generator_fidelity():
    cfg = SynthConfig(n_samples=2000, n_annotators=5, seed=13)
    ds = generate_synthetic(cfg)
    labels = np.array([r.q2_primary for r in ds.records])
    assert labels.size == 10_000
    by_sample = np.repeat(ds.segment_classes, cfg.n_annotators, axis=0)
    biases = np.tile(ds.annotator_biases, cfg.n_samples)
    analytic = np.array([label_mixture(c1, c2, b, cfg.label_noise) for (c1, c2), b in zip(by_sample, biases)])
    # Per emotion label.
    dev_label = np.max(np.abs(np.bincount(labels, minlength=K) / labels.size - analytic.mean(axis=0)))
    # Per role (first-segment class, second-segment class, other), pooled over all 10^4 draws.
    eps = cfg.label_noise
    want_first = np.mean(eps / K + (1 - eps) * biases)
    want_second = np.mean(eps / K + (1 - eps) * (1 - biases))
    first, second = np.mean(labels == by_sample[:, 0]), np.mean(labels == by_sample[:, 1])
    dev_role = max(abs(first - want_first), abs(second - want_second),
                   abs((1 - first - second) - (1 - want_first - want_second)))
    record(9, "synthetic generator matches analytic mixture", dev_label <= 0.02 and dev_role <= 0.02,
           f"max per-label deviation={dev_label:.4f}, max per-role deviation={dev_role:.4f} (10^4 draws)")
