"""Seed ensembles of classification heads and dispatch over all model kinds.

A seed ensemble trains ``n`` identical heads on identical data in identical
batch order; the heads differ only in the seed of their initialization.
Each head stands in for one annotator: the recovered distribution is the
histogram of per-head argmax labels and the prediction is its majority vote.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional, Sequence, Union

import numpy as np

from seedvote.data import K, LabeledExample
from seedvote.encoder import EncoderConfig
from seedvote.errors import InputError
from seedvote.heads import (
    BnnParams,
    HeadParams,
    MultiTaskParams,
    TrainConfig,
    bnn_predict,
    forward,
    multitask_predict,
    train_bnn,
    train_head,
    train_multitask,
)

MODEL_KINDS = ("single", "seed_ensemble", "bnn", "ldl", "multitask")
AGGREGATIONS = ("vote_histogram", "mean_softmax")

AnyHead = Union[HeadParams, BnnParams, MultiTaskParams]


@dataclass(frozen=True)
class EnsembleConfig:
    n: int = 5
    master_seed: int = 0
    head_seeds: Optional[tuple[int, ...]] = None
    aggregation: str = "vote_histogram"

    def __post_init__(self):
        if self.n < 1:
            raise InputError("ensemble size n must be >= 1")
        if self.aggregation not in AGGREGATIONS:
            raise InputError(f"aggregation must be one of {AGGREGATIONS}, got {self.aggregation!r}")
        if self.head_seeds is not None:
            if len(self.head_seeds) != self.n:
                raise InputError(f"head_seeds has {len(self.head_seeds)} entries, expected n={self.n}")
            if len(set(self.head_seeds)) != len(self.head_seeds):
                raise InputError(
                    f"duplicate head seeds {list(self.head_seeds)}: heads would be identical annotators"
                )

    def seeds(self) -> tuple[int, ...]:
        if self.head_seeds is not None:
            return tuple(self.head_seeds)
        return tuple(self.master_seed + i for i in range(self.n))


@dataclass(frozen=True)
class BnnConfig:
    prior_sigma: float = 1.0
    kl_weight: Optional[float] = None
    s_train: int = 1
    s_pred: int = 30
    rho_init: float = -5.0
    predict_seed: int = 0


@dataclass(frozen=True)
class MultiTaskConfig:
    loss_weight: float = 1.0


@dataclass(frozen=True)
class ModelConfig:
    kind: str = "seed_ensemble"
    ensemble: EnsembleConfig = field(default_factory=EnsembleConfig)
    bnn: BnnConfig = field(default_factory=BnnConfig)
    multitask: MultiTaskConfig = field(default_factory=MultiTaskConfig)

    def __post_init__(self):
        if self.kind not in MODEL_KINDS:
            raise InputError(f"model kind must be one of {MODEL_KINDS}, got {self.kind!r}")


@dataclass(frozen=True)
class FeatureDataset:
    """Features aligned with gold labels and, when known, annotator-level targets."""

    sample_ids: tuple[str, ...]
    X: np.ndarray
    gold: np.ndarray
    true_dist: Optional[np.ndarray] = None
    disagreement: Optional[np.ndarray] = None

    def __len__(self):
        return len(self.sample_ids)

    def subset(self, idx: Sequence[int]) -> "FeatureDataset":
        idx = np.asarray(idx, dtype=np.int64)
        return FeatureDataset(
            sample_ids=tuple(self.sample_ids[i] for i in idx),
            X=self.X[idx],
            gold=self.gold[idx],
            true_dist=None if self.true_dist is None else self.true_dist[idx],
            disagreement=None if self.disagreement is None else self.disagreement[idx],
        )

    @classmethod
    def from_examples(cls, examples: Sequence[LabeledExample], X: np.ndarray) -> "FeatureDataset":
        if len(examples) != X.shape[0]:
            raise InputError("example count does not match feature rows")
        have = [ex.true_dist is not None for ex in examples]
        true_dist = disagreement = None
        if all(have) and examples:
            true_dist = np.stack([ex.true_dist for ex in examples])
            disagreement = np.array([ex.disagreement for ex in examples], dtype=np.float64)
        return cls(
            sample_ids=tuple(ex.sample_id for ex in examples),
            X=np.asarray(X, dtype=np.float64),
            gold=np.array([ex.gold for ex in examples], dtype=np.int64),
            true_dist=true_dist,
            disagreement=disagreement,
        )


@dataclass(frozen=True)
class EnsembleModel:
    """Trained heads of one model kind plus the configuration that produced them."""

    kind: str
    heads: tuple
    seeds: tuple[int, ...]
    config: ModelConfig
    encoder_config: EncoderConfig = field(default_factory=EncoderConfig)
    train_config: TrainConfig = field(default_factory=TrainConfig)

    def __post_init__(self):
        if len(self.heads) != len(self.seeds):
            raise ValueError("one seed per head required")

    @property
    def n(self) -> int:
        return len(self.heads)


@dataclass(frozen=True)
class ModelOutputs:
    predictions: np.ndarray  # (N,) int labels
    distributions: np.ndarray  # (N, K) recovered distributions
    disagreement: Optional[np.ndarray] = None  # multitask only


def _train_many(fn, seeds, workers: int):
    if workers <= 1 or len(seeds) == 1:
        return [fn(s) for s in seeds]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, seeds))


def train_ensemble(
    X: np.ndarray,
    targets,
    train_config: TrainConfig,
    ens_config: EnsembleConfig,
    encoder_config: EncoderConfig = EncoderConfig(),
    *,
    workers: int = 1,
) -> EnsembleModel:
    """Train one head per seed; all heads share data and batch order."""
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] == 0:
        raise InputError("training set is empty")
    seeds = ens_config.seeds()
    heads = _train_many(lambda s: train_head(X, targets, train_config, s), seeds, workers)
    return EnsembleModel(
        kind="seed_ensemble",
        heads=tuple(heads),
        seeds=seeds,
        config=ModelConfig(kind="seed_ensemble", ensemble=ens_config),
        encoder_config=encoder_config,
        train_config=train_config,
    )


def head_argmaxes(model: EnsembleModel, X: np.ndarray) -> np.ndarray:
    """(n_heads, N) matrix of each head's argmax label."""
    X = np.atleast_2d(X)
    return np.stack([forward(h, X).argmax(axis=1) for h in model.heads])


def one_hot(labels: np.ndarray) -> np.ndarray:
    out = np.zeros((len(labels), K))
    out[np.arange(len(labels)), labels] = 1.0
    return out


def recover_distribution(model: EnsembleModel, x: np.ndarray) -> np.ndarray:
    """Recovered annotator distribution for one vector (K,) or a batch (N, K)."""
    single = np.ndim(x) == 1
    X = np.atleast_2d(x)
    if model.config.ensemble.aggregation == "mean_softmax" and model.kind != "single":
        dist = np.mean([forward(h, X) for h in model.heads], axis=0)
    else:
        votes = head_argmaxes(model, X)
        dist = np.zeros((X.shape[0], K))
        for row in votes:
            dist[np.arange(X.shape[0]), row] += 1.0
        dist /= model.n
    return dist[0] if single else dist


def predict(model: EnsembleModel, x: np.ndarray):
    """Majority vote; ties go to the lowest canonical label index."""
    dist = recover_distribution(model, x)
    labels = np.argmax(dist, axis=-1)
    return int(labels) if np.ndim(labels) == 0 else labels


def _require_oracle(trainset: FeatureDataset, kind: str, what: str):
    value = trainset.true_dist if what == "true_dist" else trainset.disagreement
    if value is None:
        raise InputError(
            f"model kind {kind!r} is an oracle baseline and needs annotator-level {what} targets "
            "on the training set; supply per-annotator annotations so aggregate_gold can compute them"
        )
    return value


def fit_model(
    trainset: FeatureDataset,
    model_config: ModelConfig,
    train_config: TrainConfig,
    encoder_config: EncoderConfig = EncoderConfig(),
    *,
    workers: int = 1,
) -> EnsembleModel:
    kind = model_config.kind
    if len(trainset) == 0:
        raise InputError("training set is empty")
    X, seed0 = trainset.X, model_config.ensemble.seeds()[0]
    if kind == "seed_ensemble":
        m = train_ensemble(X, trainset.gold, train_config, model_config.ensemble, encoder_config, workers=workers)
        return EnsembleModel(m.kind, m.heads, m.seeds, model_config, encoder_config, train_config)
    if kind == "single":
        head = train_head(X, trainset.gold, train_config, seed0)
    elif kind == "ldl":
        head = train_head(X, _require_oracle(trainset, kind, "true_dist"), train_config, seed0)
    elif kind == "bnn":
        b = model_config.bnn
        head = train_bnn(
            X, trainset.gold, train_config, seed0, prior_sigma=b.prior_sigma, kl_weight=b.kl_weight,
            s_train=b.s_train, s_pred=b.s_pred, rho_init=b.rho_init,
        )
    else:  # multitask
        g = _require_oracle(trainset, kind, "disagreement")
        head = train_multitask(X, trainset.gold, g, train_config, seed0, model_config.multitask.loss_weight)
    return EnsembleModel(kind, (head,), (seed0,), model_config, encoder_config, train_config)


def model_outputs(model: EnsembleModel, X: np.ndarray) -> ModelOutputs:
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    kind = model.kind
    if kind in ("single", "seed_ensemble"):
        dist = recover_distribution(model, X)
        return ModelOutputs(dist.argmax(axis=1), dist)
    head = model.heads[0]
    if kind == "ldl":
        dist = forward(head, X)
        return ModelOutputs(dist.argmax(axis=1), dist)
    if kind == "bnn":
        pred = bnn_predict(head, X, noise_seed=model.config.bnn.predict_seed)
        return ModelOutputs(pred.mean.argmax(axis=1), pred.vote_histogram)
    probs, g = multitask_predict(head, X)
    labels = probs.argmax(axis=1)
    return ModelOutputs(labels, one_hot(labels), g)


def run_model(
    kind: str,
    trainset: FeatureDataset,
    testset: FeatureDataset,
    model_config: Optional[ModelConfig] = None,
    train_config: TrainConfig = TrainConfig(),
    *,
    workers: int = 1,
) -> ModelOutputs:
    """Train ``kind`` on ``trainset`` and return per-sample outputs on ``testset``."""
    model_config = model_config or ModelConfig()
    if model_config.kind != kind:
        model_config = ModelConfig(kind, model_config.ensemble, model_config.bnn, model_config.multitask)
    model = fit_model(trainset, model_config, train_config, workers=workers)
    return model_outputs(model, testset.X)
