"""Maximum-likelihood training: batched NLL with one Z per batch, Adam,
early stopping on validation NLL."""

from __future__ import annotations

import math
import time
from dataclasses import asdict, dataclass, fields
from typing import Callable, Mapping

import numpy as np

from .errors import ConfigError, NumericalError
from .evaluate import log_evaluate, log_grad, log_partition
from .params import GradientAccumulator, ParamStore
from .tensorized import Model


@dataclass(frozen=True)
class TrainConfig:
    batch_size: int = 256
    learning_rate: float = 0.01
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    patience: int = 25
    max_epochs: int = 100
    seed: int = 0
    min_rel_improvement: float = 1e-4
    max_grad_norm: float | None = None

    def __post_init__(self):
        if self.batch_size < 1:
            raise ConfigError("train.batch_size must be at least 1")
        if not self.learning_rate >= 0:
            raise ConfigError("train.learning_rate must be nonnegative")
        if self.patience < 1:
            raise ConfigError("train.patience must be at least 1")
        if self.max_epochs < 0:
            raise ConfigError("train.max_epochs must be nonnegative")

    @classmethod
    def from_json(cls, obj: Mapping) -> "TrainConfig":
        known = {f.name for f in fields(cls)}
        for k in obj:
            if k not in known:
                raise ConfigError(f"unknown key train.{k}")
        return cls(**dict(obj))

    def to_json(self) -> dict:
        return asdict(self)


# losses ----------------------------------------------------------------------

def _lse(t: np.ndarray) -> np.ndarray:
    m = np.max(t, axis=0)
    m = np.where(np.isfinite(m), m, 0.0)
    with np.errstate(divide="ignore"):
        return m + np.log(np.sum(np.exp(t - m), axis=0))


def data_log_values(model: Model, X: np.ndarray) -> np.ndarray:
    """log c(x) of the unnormalized density without materializing products."""
    out = np.zeros(X.shape[0])
    if model.mono is not None:
        out += log_evaluate(model.mono, X).real
    if model.components:
        t = np.stack([2.0 * log_evaluate(c, X).real for c in model.components])
        out += _lse(t)
    return out


def model_log_z(model: Model) -> float:
    z = log_partition(model.materialized)
    if not np.isfinite(z.real) or abs(z.imag) > 1e-6:
        raise NumericalError(f"log Z is not finite and real: {z}")
    return float(z.real)


def log_likelihoods(model: Model, X) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    ll = data_log_values(model, X) - model_log_z(model)
    if not np.all(np.isfinite(ll)):
        raise NumericalError("non-finite log-likelihood")
    return ll


def nll_batch(model: Model, X) -> tuple[float, np.ndarray]:
    """(|B| log Z - sum log c(x), per-sample log-likelihoods)."""
    ll = log_likelihoods(model, X)
    return float(-ll.sum()), ll


def loss_and_grad(model: Model, X) -> tuple[float, dict[str, np.ndarray], float]:
    X = np.asarray(X, dtype=float)
    B = X.shape[0]
    acc = GradientAccumulator(model.params)
    data = np.zeros(B)
    if model.mono is not None:
        data += log_grad(model.mono, X, -1.0, acc, real_part=True).real
    if model.components:
        logs = [log_evaluate(c, X).real for c in model.components]
        t = np.stack([2.0 * z for z in logs])
        lse = _lse(t)
        data += lse
        resp = np.exp(t - lse)
        for c, r in zip(model.components, resp):
            log_grad(c, X, -2.0 * r, acc, real_part=True)
    if not np.all(np.isfinite(data)):
        raise NumericalError("log of a zero-valued data term")
    xz = np.full((1, len(model.variables)), np.nan)
    lz = log_grad(model.materialized, xz, float(B), acc, np.ones(len(model.variables), dtype=bool))
    log_z = float(lz[0].real)
    if not np.isfinite(log_z):
        raise NumericalError("log Z is not finite")
    return B * log_z - float(data.sum()), acc.gradients(), log_z


# optimizer -------------------------------------------------------------------

def _real_view(a: np.ndarray) -> np.ndarray:
    return a.view(np.float64) if np.iscomplexobj(a) else a


class Adam:
    """Adam over the real and imaginary parts of every trainable group."""

    def __init__(self, params: ParamStore, cfg: TrainConfig):
        self.params = params
        self.cfg = cfg
        self.t = 0
        self.m = {g.name: np.zeros(g.num_real()) for g in params.trainable()}
        self.v = {g.name: np.zeros(g.num_real()) for g in params.trainable()}

    def step(self, grads: Mapping[str, np.ndarray]) -> None:
        cfg = self.cfg
        self.t += 1
        flat = {n: _real_view(np.ascontiguousarray(grads[n], dtype=self.params[n].values.dtype))
                for n in self.m if n in grads}
        if cfg.max_grad_norm is not None:
            norm = math.sqrt(sum(float(np.sum(g * g)) for g in flat.values()))
            if norm > cfg.max_grad_norm:
                flat = {n: g * (cfg.max_grad_norm / norm) for n, g in flat.items()}
        b1, b2 = cfg.beta1, cfg.beta2
        for n, g in flat.items():
            m, v = self.m[n], self.v[n]
            m *= b1
            m += (1 - b1) * g
            v *= b2
            v += (1 - b2) * g * g
            mhat = m / (1 - b1 ** self.t)
            vhat = v / (1 - b2 ** self.t)
            target = _real_view(self.params[n].values)
            target -= cfg.learning_rate * mhat / (np.sqrt(vhat) + cfg.eps)


# fitting ---------------------------------------------------------------------

@dataclass
class FitResult:
    model: Model
    trace: list
    best_epoch: int


def mean_nll(model: Model, X) -> float:
    return float(-np.mean(log_likelihoods(model, X)))


def fit(model: Model, train, valid, cfg: TrainConfig,
        on_epoch: Callable[[dict], None] | None = None) -> FitResult:
    """Adam on the batched NLL; keeps the best-validation checkpoint."""
    train = np.asarray(train, dtype=float)
    valid = np.asarray(valid, dtype=float)
    if train.shape[0] == 0:
        raise ConfigError("empty training set")
    for g in model.params.values():
        g.values = np.ascontiguousarray(g.values)
    rng = np.random.default_rng(cfg.seed)
    opt = Adam(model.params, cfg)
    start = time.perf_counter()
    best = mean_nll(model, valid) if valid.shape[0] else mean_nll(model, train)
    best_snap, best_epoch, wait = model.params.snapshot(), 0, 0
    trace = []
    for epoch in range(1, cfg.max_epochs + 1):
        order = rng.permutation(train.shape[0])
        for s in range(0, train.shape[0], cfg.batch_size):
            batch = train[order[s:s + cfg.batch_size]]
            _, grads, _ = loss_and_grad(model, batch)
            opt.step(grads)
        log_z = model_log_z(model)
        train_nll = mean_nll(model, train)
        valid_nll = mean_nll(model, valid) if valid.shape[0] else train_nll
        rec = {"epoch": epoch, "train_nll": train_nll, "valid_nll": valid_nll,
               "log_z": log_z, "wall_time_s": time.perf_counter() - start}
        trace.append(rec)
        if on_epoch:
            on_epoch(rec)
        if valid_nll < best - cfg.min_rel_improvement * abs(best):
            best, best_snap, best_epoch, wait = valid_nll, model.params.snapshot(), epoch, 0
        else:
            wait += 1
            if wait >= cfg.patience:
                break
    model.params.restore(best_snap)
    return FitResult(model, trace, best_epoch)


def split_metrics(model: Model, X) -> dict:
    """Mean test log-likelihood and bits per dimension."""
    ll = log_likelihoods(model, X)
    d = len(model.variables)
    mean = float(np.mean(ll))
    return {"test_ll_mean": mean, "bpd": -mean / (d * math.log(2))}


@dataclass
class SweepResult:
    best: FitResult
    best_index: int
    valid_nll: list


def sweep(make_model: Callable[[int], Model], train, valid, cfgs) -> SweepResult:
    """Fit one fresh model per config (``make_model(i)`` builds the i-th) and
    keep the run with the lowest validation NLL."""
    results, scores = [], []
    for i, cfg in enumerate(cfgs):
        res = fit(make_model(i), train, valid, cfg)
        results.append(res)
        scores.append(mean_nll(res.model, valid if len(valid) else train))
    k = int(np.argmin(scores))
    return SweepResult(results[k], k, scores)
