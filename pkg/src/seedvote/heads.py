"""Trainable classification heads over frozen features.

Three head families share one training loop:

* a deterministic linear-softmax head (``HeadParams``),
* a mean-field Gaussian variational head (``BnnParams``) trained on the
  reparameterized ELBO,
* a multi-task head (``MultiTaskParams``) that adds a sigmoid disagreement
  output to the class logits.

All gradients are closed-form. Randomness comes from numpy's PCG64
generator (``numpy.random.default_rng``) seeded with explicit integers or
integer sequences, so every run is reproducible for fixed seeds.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Callable, Mapping, Optional

import numpy as np

from seedvote.data import K
from seedvote.errors import InputError

Arrays = dict[str, np.ndarray]


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 1e-3
    epochs: int = 3
    batch_size: int = 32
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    master_seed: int = 0
    data_order_seed: int = 0

    def __post_init__(self):
        if not self.learning_rate > 0:
            raise InputError("learning_rate must be > 0")
        if self.epochs < 1:
            raise InputError("epochs must be >= 1")
        if self.batch_size < 1:
            raise InputError("batch_size must be >= 1")


@dataclass(frozen=True)
class HeadParams:
    W: np.ndarray  # (K, d)
    b: np.ndarray  # (K,)

    def arrays(self) -> Arrays:
        return {"W": self.W, "b": self.b}

    @classmethod
    def from_arrays(cls, a: Mapping[str, np.ndarray]) -> "HeadParams":
        return cls(W=a["W"], b=a["b"])

    @property
    def d(self) -> int:
        return self.W.shape[1]


@dataclass(frozen=True)
class BnnParams:
    mu_W: np.ndarray
    rho_W: np.ndarray
    mu_b: np.ndarray
    rho_b: np.ndarray
    prior_sigma: float = 1.0
    kl_weight: Optional[float] = None
    s_train: int = 1
    s_pred: int = 30

    def arrays(self) -> Arrays:
        return {"mu_W": self.mu_W, "rho_W": self.rho_W, "mu_b": self.mu_b, "rho_b": self.rho_b}

    def with_arrays(self, a: Mapping[str, np.ndarray]) -> "BnnParams":
        return replace(self, mu_W=a["mu_W"], rho_W=a["rho_W"], mu_b=a["mu_b"], rho_b=a["rho_b"])

    @property
    def d(self) -> int:
        return self.mu_W.shape[1]


@dataclass(frozen=True)
class MultiTaskParams:
    head: HeadParams
    w_g: np.ndarray  # (d,)
    b_g: float = 0.0
    loss_weight: float = 1.0

    def arrays(self) -> Arrays:
        return {"W": self.head.W, "b": self.head.b, "w_g": self.w_g, "b_g": np.asarray(self.b_g, dtype=np.float64)}

    def with_arrays(self, a: Mapping[str, np.ndarray]) -> "MultiTaskParams":
        return replace(self, head=HeadParams(a["W"], a["b"]), w_g=a["w_g"], b_g=float(a["b_g"]))

    @property
    def d(self) -> int:
        return self.head.d


@dataclass
class AdamState:
    m: Arrays = field(default_factory=dict)
    v: Arrays = field(default_factory=dict)
    t: int = 0


# -- primitives --------------------------------------------------------------


def softmax(z: np.ndarray) -> np.ndarray:
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def log_softmax(z: np.ndarray) -> np.ndarray:
    z = z - z.max(axis=-1, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=-1, keepdims=True))


def softplus(x: np.ndarray) -> np.ndarray:
    return np.logaddexp(0.0, x)


def sigmoid(x):
    return 0.5 * (1.0 + np.tanh(0.5 * np.asarray(x, dtype=np.float64)))


def as_targets(targets, n: int) -> np.ndarray:
    """Hard labels (n,) become one-hot rows; soft targets (n, K) pass through."""
    t = np.asarray(targets)
    if t.ndim == 1:
        if t.shape[0] != n:
            raise InputError(f"expected {n} targets, got {t.shape[0]}")
        out = np.zeros((n, K), dtype=np.float64)
        out[np.arange(n), t.astype(np.int64)] = 1.0
        return out
    if t.shape != (n, K):
        raise InputError(f"soft targets must have shape ({n}, {K}), got {t.shape}")
    return t.astype(np.float64)


def _as_batch(x: np.ndarray, d: int) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.shape[-1] != d:
        raise InputError(f"feature dimension {x.shape[-1]} does not match head dimension {d}")
    return x


def _ce_and_logit_grad(logits: np.ndarray, T: np.ndarray) -> tuple[float, np.ndarray]:
    B = logits.shape[0]
    loss = -float(np.sum(T * log_softmax(logits))) / B
    # Soft targets need not sum to exactly one, so keep the general form.
    dz = (softmax(logits) * T.sum(axis=1, keepdims=True) - T) / B
    return loss, dz


# -- deterministic head ------------------------------------------------------


def init_head(seed: int, d: int, K: int = K) -> HeadParams:
    """Glorot-uniform weights and zero bias from a generator seeded by ``seed``."""
    if d < 1 or K < 1:
        raise InputError("d and K must be >= 1")
    a = math.sqrt(6.0 / (d + K))
    rng = np.random.default_rng(seed)
    return HeadParams(W=rng.uniform(-a, a, size=(K, d)), b=np.zeros(K))


def forward(params: HeadParams, x: np.ndarray) -> np.ndarray:
    """Class distribution(s) for one feature vector or a batch of rows."""
    x = _as_batch(x, params.d)
    return softmax(x @ params.W.T + params.b)


def ce_loss_grad(params: HeadParams, X: np.ndarray, targets) -> tuple[float, HeadParams]:
    """Mean cross-entropy over the batch and its gradient.

    ``targets`` is either integer labels or an (n, K) array of soft targets.
    """
    X = _as_batch(np.atleast_2d(X), params.d)
    if X.shape[0] == 0:
        raise InputError("empty batch")
    T = as_targets(targets, X.shape[0])
    loss, dz = _ce_and_logit_grad(X @ params.W.T + params.b, T)
    return loss, HeadParams(W=dz.T @ X, b=dz.sum(axis=0))


def adam_step(
    params: Mapping[str, np.ndarray],
    grads: Mapping[str, np.ndarray],
    state: AdamState,
    config: TrainConfig,
) -> tuple[Arrays, AdamState]:
    """One bias-corrected Adam update. Returns new arrays; inputs are not mutated."""
    t = state.t + 1
    b1, b2 = config.beta1, config.beta2
    new_p, new_m, new_v = {}, {}, {}
    for name, p in params.items():
        g = grads[name]
        m = state.m.get(name)
        v = state.v.get(name)
        if m is None:
            m = np.zeros_like(p, dtype=np.float64)
            v = np.zeros_like(p, dtype=np.float64)
        m = b1 * m + (1.0 - b1) * g
        v = b2 * v + (1.0 - b2) * (g * g)
        m_hat = m / (1.0 - b1**t)
        v_hat = v / (1.0 - b2**t)
        new_p[name] = p - config.learning_rate * m_hat / (np.sqrt(v_hat) + config.eps)
        new_m[name], new_v[name] = m, v
    return new_p, AdamState(new_m, new_v, t)


LossGrad = Callable[[Arrays, np.ndarray, int], tuple[float, Arrays]]


def fit(arrays: Arrays, loss_grad: LossGrad, n: int, config: TrainConfig) -> Arrays:
    """Run minibatch Adam for ``config.epochs`` epochs.

    ``loss_grad(arrays, batch_indices, step)`` returns loss and gradients.
    Batch order depends only on ``config.data_order_seed``.
    """
    if n < 1:
        raise InputError("training set is empty")
    order_rng = np.random.default_rng(config.data_order_seed)
    state = AdamState()
    step = 0
    for _ in range(config.epochs):
        perm = order_rng.permutation(n)
        for start in range(0, n, config.batch_size):
            idx = perm[start : start + config.batch_size]
            _, grads = loss_grad(arrays, idx, step)
            arrays, state = adam_step(arrays, grads, state, config)
            step += 1
    return arrays


def n_batches(n: int, batch_size: int) -> int:
    return -(-n // batch_size)


def train_head(X: np.ndarray, targets, config: TrainConfig, init_seed: int) -> HeadParams:
    """Train a linear-softmax head with cross-entropy (hard or soft targets)."""
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] == 0:
        raise InputError("training features must be a non-empty 2-D array")
    T = as_targets(targets, X.shape[0])

    def loss_grad(a, idx, _step):
        loss, g = ce_loss_grad(HeadParams.from_arrays(a), X[idx], T[idx])
        return loss, g.arrays()

    init = init_head(init_seed, X.shape[1])
    return HeadParams.from_arrays(fit(init.arrays(), loss_grad, X.shape[0], config))


# -- variational head --------------------------------------------------------


def init_bnn(
    seed: int,
    d: int,
    *,
    prior_sigma: float = 1.0,
    kl_weight: Optional[float] = None,
    s_train: int = 1,
    s_pred: int = 30,
    rho_init: float = -5.0,
) -> BnnParams:
    """Posterior means from :func:`init_head`; all rho set to ``rho_init``."""
    mu = init_head(seed, d)
    return BnnParams(
        mu_W=mu.W,
        rho_W=np.full_like(mu.W, rho_init),
        mu_b=mu.b,
        rho_b=np.full_like(mu.b, rho_init),
        prior_sigma=prior_sigma,
        kl_weight=kl_weight,
        s_train=s_train,
        s_pred=s_pred,
    )


def kl_terms(mu: np.ndarray, rho: np.ndarray, prior_sigma: float) -> tuple[float, np.ndarray, np.ndarray]:
    """KL(N(mu, softplus(rho)^2) || N(0, prior_sigma^2)) summed over entries, with d/dmu and d/drho."""
    sigma = softplus(rho)
    sp2 = prior_sigma**2
    kl = np.log(prior_sigma / sigma) + (sigma**2 + mu**2) / (2.0 * sp2) - 0.5
    d_mu = mu / sp2
    d_rho = (-1.0 / sigma + sigma / sp2) * sigmoid(rho)
    return float(kl.sum()), d_mu, d_rho


def bnn_kl(bnn: BnnParams) -> float:
    return kl_terms(bnn.mu_W, bnn.rho_W, bnn.prior_sigma)[0] + kl_terms(bnn.mu_b, bnn.rho_b, bnn.prior_sigma)[0]


def _sample_weights(bnn: BnnParams, rng: np.random.Generator):
    eps_W = rng.standard_normal(bnn.mu_W.shape)
    eps_b = rng.standard_normal(bnn.mu_b.shape)
    W = bnn.mu_W + softplus(bnn.rho_W) * eps_W
    b = bnn.mu_b + softplus(bnn.rho_b) * eps_b
    return W, b, eps_W, eps_b


def bnn_elbo_grad(bnn: BnnParams, X: np.ndarray, targets, noise_seed) -> tuple[float, Arrays]:
    """Negative ELBO estimate: mean CE over ``s_train`` weight draws plus ``kl_weight`` * KL.

    The same ``noise_seed`` reproduces the same weight draws, which is what
    makes finite-difference checks against this function meaningful.
    """
    if bnn.kl_weight is None:
        raise InputError("kl_weight must be set before evaluating the ELBO")
    X = _as_batch(np.atleast_2d(X), bnn.d)
    if X.shape[0] == 0:
        raise InputError("empty batch")
    T = as_targets(targets, X.shape[0])
    rng = np.random.default_rng(noise_seed)
    S = bnn.s_train
    sig_W, sig_b = sigmoid(bnn.rho_W), sigmoid(bnn.rho_b)
    g = {k: np.zeros_like(v) for k, v in bnn.arrays().items()}
    nll = 0.0
    for _ in range(S):
        W, b, eps_W, eps_b = _sample_weights(bnn, rng)
        loss, dz = _ce_and_logit_grad(X @ W.T + b, T)
        gW, gb = dz.T @ X, dz.sum(axis=0)
        nll += loss / S
        g["mu_W"] += gW / S
        g["mu_b"] += gb / S
        g["rho_W"] += gW * eps_W * sig_W / S
        g["rho_b"] += gb * eps_b * sig_b / S
    beta = bnn.kl_weight
    klW, dmuW, drhoW = kl_terms(bnn.mu_W, bnn.rho_W, bnn.prior_sigma)
    klb, dmub, drhob = kl_terms(bnn.mu_b, bnn.rho_b, bnn.prior_sigma)
    g["mu_W"] += beta * dmuW
    g["rho_W"] += beta * drhoW
    g["mu_b"] += beta * dmub
    g["rho_b"] += beta * drhob
    return nll + beta * (klW + klb), g


@dataclass(frozen=True)
class BnnPrediction:
    mean: np.ndarray  # (n, K) average of per-draw softmax outputs
    samples: np.ndarray  # (S, n, K)
    vote_histogram: np.ndarray  # (n, K) normalized counts of per-draw argmax

    def __len__(self):
        return self.mean.shape[0]


def bnn_predict(bnn: BnnParams, X: np.ndarray, s_pred: Optional[int] = None, noise_seed=0) -> BnnPrediction:
    """Monte-Carlo predictive for a single vector or a batch.

    Every row of a batch sees the same ``s_pred`` weight draws.
    """
    S = bnn.s_pred if s_pred is None else s_pred
    if S < 1:
        raise InputError("s_pred must be >= 1")
    X = _as_batch(np.atleast_2d(X), bnn.d)
    rng = np.random.default_rng(noise_seed)
    draws = []
    for _ in range(S):
        W, b, _, _ = _sample_weights(bnn, rng)
        draws.append(softmax(X @ W.T + b))
    samples = np.stack(draws)
    votes = np.zeros((X.shape[0], K))
    for probs in samples:
        votes[np.arange(X.shape[0]), probs.argmax(axis=1)] += 1.0
    return BnnPrediction(mean=samples.mean(axis=0), samples=samples, vote_histogram=votes / S)


def train_bnn(
    X: np.ndarray,
    targets,
    config: TrainConfig,
    init_seed: int,
    *,
    prior_sigma: float = 1.0,
    kl_weight: Optional[float] = None,
    s_train: int = 1,
    s_pred: int = 30,
    rho_init: float = -5.0,
) -> BnnParams:
    """Train the variational head. ``kl_weight=None`` means 1 / batches-per-epoch."""
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] == 0:
        raise InputError("training features must be a non-empty 2-D array")
    n = X.shape[0]
    T = as_targets(targets, n)
    if kl_weight is None:
        kl_weight = 1.0 / n_batches(n, config.batch_size)
    bnn = init_bnn(
        init_seed, X.shape[1], prior_sigma=prior_sigma, kl_weight=kl_weight,
        s_train=s_train, s_pred=s_pred, rho_init=rho_init,
    )

    def loss_grad(a, idx, step):
        return bnn_elbo_grad(bnn.with_arrays(a), X[idx], T[idx], noise_seed=[init_seed, step])

    return bnn.with_arrays(fit(bnn.arrays(), loss_grad, n, config))


# -- multi-task head ---------------------------------------------------------


def init_multitask(seed: int, d: int, loss_weight: float = 1.0) -> MultiTaskParams:
    return MultiTaskParams(head=init_head(seed, d), w_g=np.zeros(d), b_g=0.0, loss_weight=loss_weight)


def _check_disagreement(g_target, n: int) -> np.ndarray:
    if g_target is None:
        raise InputError(
            "multitask head needs per-sample disagreement targets; derive them from "
            "annotator-level records with aggregate_gold"
        )
    g = np.asarray(g_target, dtype=np.float64)
    if g.shape != (n,) or np.any(np.isnan(g)):
        raise InputError(
            "missing disagreement target; derive targets from annotator-level records with aggregate_gold"
        )
    return g


def multitask_loss_grad(params: MultiTaskParams, X: np.ndarray, gold, g_target) -> tuple[float, Arrays]:
    """CE on the gold label plus ``loss_weight`` * MSE of the sigmoid disagreement output."""
    X = _as_batch(np.atleast_2d(X), params.d)
    B = X.shape[0]
    if B == 0:
        raise InputError("empty batch")
    g_t = _check_disagreement(g_target, B)
    T = as_targets(gold, B)
    ce, dz = _ce_and_logit_grad(X @ params.head.W.T + params.head.b, T)
    g_pred = sigmoid(X @ params.w_g + params.b_g)
    resid = g_pred - g_t
    lam = params.loss_weight
    mse = float(np.mean(resid**2))
    dzg = lam * 2.0 * resid * g_pred * (1.0 - g_pred) / B
    grads = {
        "W": dz.T @ X,
        "b": dz.sum(axis=0),
        "w_g": dzg @ X,
        "b_g": np.asarray(dzg.sum()),
    }
    return ce + lam * mse, grads


def multitask_predict(params: MultiTaskParams, X: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Class distributions and predicted disagreement in [0, 1]."""
    X = _as_batch(np.atleast_2d(X), params.d)
    return forward(params.head, X), sigmoid(X @ params.w_g + params.b_g)


def train_multitask(
    X: np.ndarray, gold, g_target, config: TrainConfig, init_seed: int, loss_weight: float = 1.0
) -> MultiTaskParams:
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] == 0:
        raise InputError("training features must be a non-empty 2-D array")
    n = X.shape[0]
    g_t = _check_disagreement(g_target, n)
    T = as_targets(gold, n)
    mt = init_multitask(init_seed, X.shape[1], loss_weight)

    def loss_grad(a, idx, _step):
        return multitask_loss_grad(mt.with_arrays(a), X[idx], T[idx], g_t[idx])

    return mt.with_arrays(fit(mt.arrays(), loss_grad, n, config))
