"""Single-hidden-layer neural surrogates for the simulation objective.

Two variants share one architecture (ReLU hidden layer, linear scalar
output) and one trainer (mini-batch Adam on mean squared error, decoupled
weight decay, global gradient-norm clipping, early stopping with weight
restore):

* feedforward: chromosome in, point-estimate fitness out;
* pairwise: two chromosomes in, fitness difference out.  A design's
  fitness is predicted against several evaluated reference designs and the
  individual predictions are aggregated into a mean and standard deviation.

Inputs are raw chromosome bits; targets are standardized over the training
split and predictions de-standardized, so training is insensitive to the
objective's scale.  Hyperparameters are tuned by random search.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .genetic_ops import Sense

__all__ = [
    "Hyperparams",
    "TrainConfig",
    "Mlp",
    "Prediction",
    "TrainReport",
    "TrainingError",
    "TuneResult",
    "forward",
    "mse_loss_and_gradients",
    "clip_gradients",
    "train",
    "train_pairwise",
    "predict_feedforward",
    "predict_feedforward_many",
    "predict_pairwise",
    "prob_better_than_best",
    "tune",
    "sample_hyperparams",
    "save_model",
    "load_model",
]

HIDDEN_CHOICES = (8, 16, 32, 64, 128)
BATCH_CHOICES = (8, 16, 32)


class TrainingError(RuntimeError):
    """Training produced a non-finite loss or could not proceed."""


@dataclass(frozen=True)
class Hyperparams:
    """Tunable knobs; ranges follow the published tuning table."""

    learning_rate: float = 1e-3
    batch_size: int = 16
    hidden_units: int = 32
    dropout_rate: float = 0.1
    weight_decay: float = 1e-3
    grad_clip_norm: float = 5.0

    def __post_init__(self):
        if not 1e-4 <= self.learning_rate <= 1e-2:
            raise ValueError("learning_rate outside [1e-4, 1e-2]")
        if self.batch_size not in BATCH_CHOICES:
            raise ValueError(f"batch_size must be one of {BATCH_CHOICES}")
        if self.hidden_units not in HIDDEN_CHOICES:
            raise ValueError(f"hidden_units must be one of {HIDDEN_CHOICES}")
        if not 0.0 <= self.dropout_rate <= 0.5:
            raise ValueError("dropout_rate outside [0, 0.5]")
        # 0 disables decay entirely; the tuning sampler stays within [1e-4, 1e-2]
        if not 0.0 <= self.weight_decay <= 1e-2:
            raise ValueError("weight_decay outside [0, 1e-2]")
        if not 1.0 <= self.grad_clip_norm <= 10.0:
            raise ValueError("grad_clip_norm outside [1, 10]")


def sample_hyperparams(rng: np.random.Generator) -> Hyperparams:
    """Draw one random-search configuration from the allowed ranges."""
    return Hyperparams(
        learning_rate=float(10.0 ** rng.uniform(-4.0, -2.0)),
        batch_size=int(rng.choice(BATCH_CHOICES)),
        hidden_units=int(rng.choice(HIDDEN_CHOICES)),
        dropout_rate=float(rng.uniform(0.0, 0.5)),
        weight_decay=float(10.0 ** rng.uniform(-4.0, -2.0)),
        grad_clip_norm=float(rng.uniform(1.0, 10.0)),
    )


@dataclass(frozen=True)
class TrainConfig:
    max_epochs: int = 1000
    early_stopping_patience: int = 20
    validation_fraction: float = 0.2
    seed: int | tuple = 0

    def __post_init__(self):
        if not 0.0 < self.validation_fraction < 1.0:
            raise ValueError("validation_fraction must be in (0, 1)")


@dataclass(frozen=True)
class Prediction:
    """Point estimate (feedforward) or aggregated mean/std (pairwise)."""

    mean: float
    std: float | None = None

    def __post_init__(self):
        if self.std is not None and self.std < 0:
            raise ValueError("std must be >= 0")


@dataclass
class TrainReport:
    """Per-epoch losses (original target units) and early-stopping outcome."""

    train_loss: list[float] = field(default_factory=list)
    val_loss: list[float] = field(default_factory=list)
    best_epoch: int = -1
    best_val_loss: float = math.inf
    stopped_early: bool = False

    @property
    def epochs(self) -> int:
        return len(self.train_loss)

    def write_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="\n") as fh:
            fh.write("epoch,train_loss,val_loss\n")
            for e, (tr, va) in enumerate(zip(self.train_loss, self.val_loss)):
                fh.write(f"{e},{tr!r},{va!r}\n")


class Mlp:
    """One ReLU hidden layer, linear scalar output, float64 weights.

    ``target_mean`` and ``target_scale`` hold the standardization constants
    of the most recent training run; predictions are de-standardized with
    them (the pairwise variant uses the scale only, since it predicts
    differences).
    """

    def __init__(self, input_width: int, hidden_units: int, seed=0, kind: str = "feedforward"):
        if kind not in ("feedforward", "pairwise"):
            raise ValueError(f"unknown model kind {kind!r}")
        rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
        lim1 = math.sqrt(6.0 / (input_width + hidden_units))
        lim2 = math.sqrt(6.0 / (hidden_units + 1))
        self.input_width = input_width
        self.hidden_units = hidden_units
        self.kind = kind
        self.W1 = rng.uniform(-lim1, lim1, size=(input_width, hidden_units))
        self.b1 = np.zeros(hidden_units)
        self.W2 = rng.uniform(-lim2, lim2, size=hidden_units)
        self.b2 = np.zeros(1)
        self.target_mean = 0.0
        self.target_scale = 1.0
        self.hyperparams: Hyperparams | None = None

    @property
    def params(self) -> list[np.ndarray]:
        return [self.W1, self.b1, self.W2, self.b2]

    # weight decay applies to weight matrices, not biases
    _DECAY = (True, False, True, False)

    def snapshot(self) -> list[np.ndarray]:
        return [p.copy() for p in self.params]

    def restore(self, saved: list[np.ndarray]) -> None:
        for p, s in zip(self.params, saved):
            p[...] = s

    def forward_batch(
        self,
        X: np.ndarray,
        dropout_rate: float = 0.0,
        rng: np.random.Generator | None = None,
    ):
        """Outputs for a (B, input_width) batch plus the cache for backprop."""
        Z = X @ self.W1 + self.b1
        H = np.maximum(Z, 0.0)
        mask = None
        if dropout_rate > 0.0:
            keep = 1.0 - dropout_rate
            mask = (rng.random(Z.shape) < keep) / keep
            H = H * mask
        y = H @ self.W2 + self.b2[0]
        return y, (X, Z, H, mask)


def forward(model: Mlp, x, mode: str = "inference", dropout_rate: float = 0.0,
            rng: np.random.Generator | None = None) -> float:
    """Network output for one input vector, in standardized target units.

    ``mode='train'`` applies inverted dropout with the given rate;
    inference applies none, so the two agree exactly at rate 0.
    """
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (model.input_width,):
        raise ValueError(f"input width {x.shape} does not match {model.input_width}")
    if mode == "train":
        y, _ = model.forward_batch(x[None, :], dropout_rate, rng)
    elif mode == "inference":
        y, _ = model.forward_batch(x[None, :])
    else:
        raise ValueError(f"unknown mode {mode!r}")
    return float(y[0])


def mse_loss_and_gradients(model: Mlp, X: np.ndarray, targets: np.ndarray,
                           dropout_rate: float = 0.0,
                           rng: np.random.Generator | None = None):
    """Mean squared error over a batch and its gradients w.r.t. all parameters."""
    y, (Xc, Z, H, mask) = model.forward_batch(X, dropout_rate, rng)
    err = y - targets
    loss = float(np.mean(err * err))
    dy = (2.0 / err.size) * err
    dW2 = H.T @ dy
    db2 = np.array([dy.sum()])
    dH = np.outer(dy, model.W2)
    if mask is not None:
        dH = dH * mask
    dZ = dH * (Z > 0.0)
    dW1 = Xc.T @ dZ
    db1 = dZ.sum(axis=0)
    return loss, [dW1, db1, dW2, db2]


def clip_gradients(grads: list[np.ndarray], max_norm: float):
    """Scale gradients in place so their global L2 norm is at most ``max_norm``."""
    total = math.sqrt(sum(float(np.sum(g * g)) for g in grads))
    if total > max_norm and total > 0.0:
        scale = max_norm / total
        for g in grads:
            g *= scale
    return grads, total


class _Adam:
    def __init__(self, params: list[np.ndarray], lr: float,
                 beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]

    def step(self, params: list[np.ndarray], grads: list[np.ndarray],
             weight_decay: float, decay_flags) -> None:
        self.t += 1
        c1 = 1.0 - self.beta1 ** self.t
        c2 = 1.0 - self.beta2 ** self.t
        for p, g, m, v, decay in zip(params, grads, self.m, self.v, decay_flags):
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            p -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)
            if decay:
                p -= self.lr * weight_decay * p


def _standardize_targets(y_train: np.ndarray) -> tuple[float, float]:
    if not np.all(np.isfinite(y_train)):
        raise TrainingError("non-finite training targets")
    mean = float(np.mean(y_train))
    scale = float(np.std(y_train))
    if scale < 1e-12:
        scale = 1.0
    return mean, scale


def _split_indices(n: int, fraction: float, rng: np.random.Generator):
    perm = rng.permutation(n)
    n_val = max(1, int(round(fraction * n)))
    if n_val >= n:
        n_val = n - 1
    return perm[n_val:], perm[:n_val]


def _fit(
    model: Mlp,
    epoch_batches: Callable[[np.random.Generator], Sequence[tuple[np.ndarray, np.ndarray]]],
    val_data: tuple[np.ndarray, np.ndarray],
    hp: Hyperparams,
    cfg: TrainConfig,
    rng: np.random.Generator,
) -> TrainReport:
    """Adam training loop with early stopping on validation loss.

    Targets are already standardized; reported losses are converted back to
    original units with the model's target scale.
    """
    opt = _Adam(model.params, hp.learning_rate)
    report = TrainReport()
    Xv, tv = val_data
    scale2 = model.target_scale ** 2
    best_params = model.snapshot()
    since_best = 0
    for epoch in range(cfg.max_epochs):
        sse = 0.0
        count = 0
        for Xb, tb in epoch_batches(rng):
            loss, grads = mse_loss_and_gradients(model, Xb, tb, hp.dropout_rate, rng)
            if not math.isfinite(loss):
                raise TrainingError(f"non-finite training loss at epoch {epoch}")
            clip_gradients(grads, hp.grad_clip_norm)
            opt.step(model.params, grads, hp.weight_decay, model._DECAY)
            sse += loss * len(tb)
            count += len(tb)
        yv, _ = model.forward_batch(Xv)
        val = float(np.mean((yv - tv) ** 2))
        if not math.isfinite(val):
            raise TrainingError(f"non-finite validation loss at epoch {epoch}")
        report.train_loss.append(sse / count * scale2)
        report.val_loss.append(val * scale2)
        if val * scale2 < report.best_val_loss:
            report.best_val_loss = val * scale2
            report.best_epoch = epoch
            best_params = model.snapshot()
            since_best = 0
        else:
            since_best += 1
            if since_best > cfg.early_stopping_patience:
                report.stopped_early = True
                break
    model.restore(best_params)
    return report


def _minibatches(X, t, batch_size, shuffle_rng):
    order = shuffle_rng.permutation(len(t))
    for lo in range(0, len(t), batch_size):
        idx = order[lo:lo + batch_size]
        yield X[idx], t[idx]


def _train_split(model, X_tr, y_tr, X_val, y_val, hp, cfg) -> TrainReport:
    model.target_mean, model.target_scale = _standardize_targets(y_tr)
    z_tr = (y_tr - model.target_mean) / model.target_scale
    z_val = (y_val - model.target_mean) / model.target_scale
    rng = np.random.default_rng(np.random.SeedSequence(cfg.seed, spawn_key=(1,)))

    def epoch_batches(r):
        return _minibatches(X_tr, z_tr, hp.batch_size, r)

    model.hyperparams = hp
    return _fit(model, epoch_batches, (X_val, z_val), hp, cfg, rng)


def train(model: Mlp, X, y, hp: Hyperparams, cfg: TrainConfig | None = None):
    """Train the feedforward variant on (chromosome, fitness) data.

    The dataset is split into train/validation parts per
    ``cfg.validation_fraction``; early stopping restores the weights of the
    best validation epoch.  Returns ``(model, report)``; the model is
    modified in place.
    """
    cfg = cfg or TrainConfig()
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if len(y) < 5:
        raise ValueError("need at least 5 samples to train")
    split_rng = np.random.default_rng(np.random.SeedSequence(cfg.seed, spawn_key=(0,)))
    tr, val = _split_indices(len(y), cfg.validation_fraction, split_rng)
    report = _train_split(model, X[tr], y[tr], X[val], y[val], hp, cfg)
    return model, report


def _pair_batches(X, z, batch_size, k, rng):
    i = rng.integers(len(z), size=k)
    j = rng.integers(len(z), size=k)
    Xp = np.hstack([X[i], X[j]])
    tp = z[j] - z[i]
    for lo in range(0, k, batch_size):
        yield Xp[lo:lo + batch_size], tp[lo:lo + batch_size]


def _train_pairwise_split(model, X_tr, y_tr, X_val, y_val, hp, cfg,
                          pairs_per_sample: int = 4) -> TrainReport:
    model.target_mean, model.target_scale = _standardize_targets(y_tr)
    z_tr = (y_tr - model.target_mean) / model.target_scale
    z_val = (y_val - model.target_mean) / model.target_scale
    ss = np.random.SeedSequence(cfg.seed, spawn_key=(2,))
    rng = np.random.default_rng(ss)
    # fixed validation pairs so early stopping sees a stable signal
    val_rng = np.random.default_rng(np.random.SeedSequence(cfg.seed, spawn_key=(3,)))
    kv = max(2, pairs_per_sample * len(z_val))
    iv = val_rng.integers(len(z_val), size=kv)
    jv = val_rng.integers(len(z_val), size=kv)
    Xv = np.hstack([X_val[iv], X_val[jv]])
    tv = z_val[jv] - z_val[iv]
    k = pairs_per_sample * len(z_tr)

    def epoch_batches(r):
        return _pair_batches(X_tr, z_tr, hp.batch_size, k, r)

    model.hyperparams = hp
    return _fit(model, epoch_batches, (Xv, tv), hp, cfg, rng)


def train_pairwise(model: Mlp, X, y, hp: Hyperparams, cfg: TrainConfig | None = None):
    """Train the pairwise variant to predict fitness differences.

    Each epoch samples fresh random ordered design pairs (four per training
    design), so the n-squared pair pool is exploited without quadratic
    epoch cost.  Returns ``(model, report)``.
    """
    cfg = cfg or TrainConfig()
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if len(y) < 5:
        raise ValueError("need at least 5 samples to train")
    if model.kind != "pairwise":
        raise ValueError("model kind must be 'pairwise'")
    split_rng = np.random.default_rng(np.random.SeedSequence(cfg.seed, spawn_key=(0,)))
    tr, val = _split_indices(len(y), cfg.validation_fraction, split_rng)
    report = _train_pairwise_split(model, X[tr], y[tr], X[val], y[val], hp, cfg)
    return model, report


def predict_feedforward(model: Mlp, chromosome) -> Prediction:
    """Point-estimate prediction in original fitness units (no std)."""
    z = forward(model, np.asarray(chromosome, dtype=np.float64))
    return Prediction(mean=model.target_mean + model.target_scale * z)


def predict_feedforward_many(model: Mlp, X) -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    z, _ = model.forward_batch(X)
    return model.target_mean + model.target_scale * z


def predict_pairwise(
    model: Mlp,
    chromosome,
    references: Sequence[tuple],
    eta: int,
    rng: np.random.Generator,
) -> Prediction:
    """Aggregate per-reference predictions into a mean and sample std.

    Draws ``min(eta, len(references))`` distinct references (chromosome,
    fitness) pairs; each individual prediction is the reference fitness plus
    the predicted difference.  The std uses the n-1 denominator.
    """
    if eta < 2:
        raise ValueError("eta must be >= 2")
    if len(references) < 2:
        raise ValueError("need at least 2 references")
    x_u = np.asarray(chromosome, dtype=np.float64)
    k = min(eta, len(references))
    idx = rng.choice(len(references), size=k, replace=False)
    ref_x = np.asarray([np.asarray(references[i][0], dtype=np.float64) for i in idx])
    ref_y = np.asarray([float(references[i][1]) for i in idx])
    X = np.hstack([ref_x, np.tile(x_u, (k, 1))])
    dz, _ = model.forward_batch(X)
    preds = ref_y + model.target_scale * dz
    return Prediction(mean=float(np.mean(preds)), std=float(np.std(preds, ddof=1)))


def prob_better_than_best(pred: Prediction, best: float, sense: Sense) -> float:
    """Probability that a Normal(mean, std^2) outcome beats the best fitness so far."""
    if pred.std is None:
        raise ValueError("prediction has no std; probability undefined")
    if sense is Sense.MINIMIZE:
        margin = best - pred.mean
    else:
        margin = pred.mean - best
    if pred.std == 0.0:
        return 1.0 if margin > 0 else 0.0
    z = margin / pred.std
    return 0.5 * (1.0 + math.erf(z / math.sqrt(2.0)))


@dataclass
class TuneResult:
    hyperparams: Hyperparams
    trials: list[tuple[Hyperparams, float]]


def tune(
    X,
    y,
    variant: str = "feedforward",
    trials: int = 50,
    seed=0,
    cfg: TrainConfig | None = None,
    sample_fn: Callable[[np.random.Generator], Hyperparams] | None = None,
) -> TuneResult:
    """Random-search hyperparameter tuning.

    One 80/20 split is drawn up front and shared by every trial; each trial
    samples a configuration, trains on the training part, and is scored by
    its best validation loss.  The configuration with the lowest validation
    loss wins (ties broken by trial order).
    """
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if len(y) < 10:
        raise ValueError("need at least 10 samples to tune")
    if variant not in ("feedforward", "pairwise"):
        raise ValueError(f"unknown variant {variant!r}")
    cfg = cfg or TrainConfig()
    sample_fn = sample_fn or sample_hyperparams
    sample_rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(0,)))
    split_rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(1,)))
    tr, val = _split_indices(len(y), cfg.validation_fraction, split_rng)
    width = X.shape[1] if variant == "feedforward" else 2 * X.shape[1]

    results: list[tuple[Hyperparams, float]] = []
    best_idx = 0
    for t in range(trials):
        hp = sample_fn(sample_rng)
        model = Mlp(width, hp.hidden_units,
                    seed=np.random.SeedSequence(seed, spawn_key=(2, t)),
                    kind=variant)
        trial_cfg = replace(cfg, seed=(seed, 3, t))
        if variant == "feedforward":
            report = _train_split(model, X[tr], y[tr], X[val], y[val], hp, trial_cfg)
        else:
            report = _train_pairwise_split(model, X[tr], y[tr], X[val], y[val], hp, trial_cfg)
        results.append((hp, report.best_val_loss))
        if report.best_val_loss < results[best_idx][1]:
            best_idx = t
    return TuneResult(hyperparams=results[best_idx][0], trials=results)


def save_model(model: Mlp, path: str | Path) -> None:
    """Write a JSON snapshot: shapes, flat weights, standardization, hyperparameters."""
    doc = {
        "kind": model.kind,
        "input_width": model.input_width,
        "hidden_units": model.hidden_units,
        "W1": model.W1.ravel().tolist(),
        "b1": model.b1.tolist(),
        "W2": model.W2.tolist(),
        "b2": model.b2.tolist(),
        "target_mean": model.target_mean,
        "target_scale": model.target_scale,
        "hyperparams": None if model.hyperparams is None else vars(model.hyperparams).copy(),
    }
    Path(path).write_text(json.dumps(doc, separators=(",", ":")) + "\n")


def load_model(path: str | Path) -> Mlp:
    doc = json.loads(Path(path).read_text())
    model = Mlp(doc["input_width"], doc["hidden_units"], kind=doc["kind"])
    model.W1 = np.array(doc["W1"], dtype=np.float64).reshape(
        doc["input_width"], doc["hidden_units"]
    )
    model.b1 = np.array(doc["b1"], dtype=np.float64)
    model.W2 = np.array(doc["W2"], dtype=np.float64)
    model.b2 = np.array(doc["b2"], dtype=np.float64)
    model.target_mean = doc["target_mean"]
    model.target_scale = doc["target_scale"]
    if doc.get("hyperparams"):
        model.hyperparams = Hyperparams(**doc["hyperparams"])
    return model
