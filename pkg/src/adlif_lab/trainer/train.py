"""Minibatch training loop, evaluation and autoregressive rollout."""
from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np

from ..artifacts import write_csv
from ..stability import spectral_radius
from ..systems import SpringMassSystem, spring_mass_dataset
from .config import TrainConfig
from .losses import class_scores, loss_and_grad
from .network import Network, NumericalDivergence, clip_params
from .optim import Adam, clip_by_global_norm

LOG_COLUMNS = ["epoch", "train_loss", "val_metric", "test_metric", "grad_norm", "unstable_neuron_count", "seconds"]


@dataclass
class Dataset:
    """Inputs (n, T, D) and targets: labels (n,) or sequences (n, T, C)."""

    x: np.ndarray
    y: np.ndarray

    def __len__(self):
        return len(self.x)


@dataclass
class TrainResult:
    log: list[dict]
    best_epoch: int
    best_val: float
    test_at_best: float
    diverged: bool
    divergence: str
    best_params: dict
    seconds: float
    extra: dict = field(default_factory=dict)


def is_classification(tcfg: TrainConfig) -> bool:
    return tcfg.loss != "mse"


def unstable_neuron_count(net: Network) -> int:
    """Hidden adLIF neurons whose sub-threshold decay rate is >= 1."""
    n = 0
    for l, lc in enumerate(net.config.layers):
        if lc.kind == "lif":
            continue
        v = net.neuron_values(l)
        r = spectral_radius(v["tau_u"], v["tau_w"], v["a"], net.config.dt, lc.kind)
        n += int(np.sum(r >= 1.0))
    return n


def evaluate(net: Network, data: Dataset, tcfg: TrainConfig, batch_size: int = 256) -> tuple[float, float]:
    """Return ``(loss, metric)``; metric is accuracy or MSE."""
    tot_loss, correct, sq, n = 0.0, 0, 0.0, len(data)
    for i in range(0, n, batch_size):
        xb, yb = data.x[i : i + batch_size], data.y[i : i + batch_size]
        y = net.predict(xb, tcfg.closed_loop_from)
        loss, _ = loss_and_grad(y, yb, tcfg.loss, tcfg.burn_in)
        if not math.isfinite(loss):
            raise NumericalDivergence("loss", -1)
        tot_loss += loss * len(xb)
        if is_classification(tcfg):
            s = class_scores(y, tcfg.loss, tcfg.burn_in)
            correct += int(np.sum(np.argmax(s, axis=1) == yb))
        else:
            sq += loss * len(xb)
    metric = correct / n if is_classification(tcfg) else sq / n
    return tot_loss / n, metric


def train(
    net: Network,
    train_data: Dataset,
    val_data: Dataset,
    test_data: Dataset | None,
    tcfg: TrainConfig,
    log_path=None,
    progress=None,
) -> TrainResult:
    """Adam + global-norm clipping; keeps the parameters of the best validation epoch."""
    t_start = time.perf_counter()
    root = np.random.SeedSequence(tcfg.seed, spawn_key=(11,))
    shuffle_rng = np.random.default_rng(root.spawn(1)[0])
    dropout_rng = np.random.default_rng(np.random.SeedSequence(tcfg.seed, spawn_key=(12,)))
    opt = Adam(net.params, tcfg.lr, tcfg.adam_betas, tcfg.adam_eps)
    cls = is_classification(tcfg)
    better = (lambda a, b: a > b) if cls else (lambda a, b: a < b)
    best_val = -math.inf if cls else math.inf
    best_epoch, test_at_best = -1, math.nan
    best_params = {k: v.copy() for k, v in net.params.items()}
    log: list[dict] = []
    diverged, why = False, ""
    n = len(train_data)

    for epoch in range(1, tcfg.epochs + 1):
        t0 = time.perf_counter()
        perm = shuffle_rng.permutation(n)
        losses, norms = [], []
        try:
            for i in range(0, n, tcfg.batch_size):
                idx = perm[i : i + tcfg.batch_size]
                xb, yb = train_data.x[idx], train_data.y[idx]
                trace, y = net.forward(xb, tcfg.closed_loop_from, dropout_rng=dropout_rng)
                loss, g = loss_and_grad(y, yb, tcfg.loss, tcfg.burn_in)
                if not math.isfinite(loss):
                    raise NumericalDivergence("loss", epoch)
                grads = net.backward(trace, g)
                norm = clip_by_global_norm(grads, tcfg.clip_norm)
                if not math.isfinite(norm):
                    raise NumericalDivergence("gradient", epoch)
                opt.step(net.params, grads)
                clip_params(net.params)
                losses.append(loss * len(idx))
                norms.append(norm)
            _, val_metric = evaluate(net, val_data, tcfg)
            test_metric = evaluate(net, test_data, tcfg)[1] if test_data is not None else math.nan
        except NumericalDivergence as e:
            diverged, why = True, str(e)
            log.append({
                "epoch": epoch, "train_loss": math.nan, "val_metric": math.nan, "test_metric": math.nan,
                "grad_norm": math.nan, "unstable_neuron_count": unstable_neuron_count(net),
                "seconds": time.perf_counter() - t0,
            })
            break
        row = {
            "epoch": epoch,
            "train_loss": sum(losses) / n,
            "val_metric": val_metric,
            "test_metric": test_metric,
            "grad_norm": float(np.mean(norms)),
            "unstable_neuron_count": unstable_neuron_count(net),
            "seconds": time.perf_counter() - t0,
        }
        log.append(row)
        if better(val_metric, best_val):
            best_val, best_epoch, test_at_best = val_metric, epoch, test_metric
            best_params = {k: v.copy() for k, v in net.params.items()}
        if progress is not None:
            progress(row)
        if log_path is not None:
            write_csv(log_path, log, LOG_COLUMNS)
    if log_path is not None:
        write_csv(log_path, log, LOG_COLUMNS)
    return TrainResult(
        log=log, best_epoch=best_epoch, best_val=best_val, test_at_best=test_at_best,
        diverged=diverged, divergence=why, best_params=best_params,
        seconds=time.perf_counter() - t_start,
    )


# ---------------------------------------------------------------------------
# Autoregression on the spring-mass task
# ---------------------------------------------------------------------------


@dataclass
class AutoregressResult:
    bucket_start_ms: np.ndarray  # start of each bucket, relative to the closed-loop onset
    bucket_mse: np.ndarray
    baseline_mse: float  # constant-zero predictor, averaged over the closed-loop window
    baseline_bucket_mse: np.ndarray
    closed_loop_mse: float
    degradation_ms: float  # first bucket at or above the zero predictor; window length if never
    degraded: bool


def bucket_mse(pred, target, start: int, bucket: int):
    """Mean squared error per bucket of ``bucket`` steps from step ``start``."""
    err = ((np.asarray(pred) - np.asarray(target)) ** 2).mean(axis=(0, 2))[start:]
    nb = len(err) // bucket
    return err[: nb * bucket].reshape(nb, bucket).mean(axis=1)


def autoregress_eval(
    net,
    system: SpringMassSystem,
    horizon: int = 200,
    n_samples: int = 64,
    teacher_steps: int = 100,
    bucket_ms: float = 25.0,
    seed: int = 12345,
) -> AutoregressResult:
    """Teacher-forced for ``teacher_steps`` inputs, then closed loop.

    ``net`` needs ``predict(x, closed_loop_from)``; prediction k targets
    step k+1 of a fresh trajectory. Buckets cover the closed-loop
    predictions k >= teacher_steps.
    """
    ds = spring_mass_dataset(system, n_samples, horizon + 1, seed)
    x, target = ds.samples[:, :-1], ds.samples[:, 1:]
    pred = net.predict(x, teacher_steps)
    steps = max(1, int(round(bucket_ms / system.dt_sim)))
    b = bucket_mse(pred, target, teacher_steps, steps)
    b0 = bucket_mse(np.zeros_like(target), target, teacher_steps, steps)
    base = float(np.mean(target[:, teacher_steps:] ** 2))
    closed = float(np.mean((pred[:, teacher_steps:] - target[:, teacher_steps:]) ** 2))
    starts = np.arange(len(b)) * steps * system.dt_sim
    # compare each bucket with the zero predictor on the same bucket
    hit = np.flatnonzero(~(b < b0))
    degraded = hit.size > 0
    deg = float(starts[hit[0]]) if degraded else float(len(b) * steps * system.dt_sim)
    return AutoregressResult(starts, b, base, b0, closed, deg, degraded)


class GroundTruthPredictor:
    """Predicts the true next state; a reference for the evaluation plumbing."""

    def __init__(self, system: SpringMassSystem):
        self.P = system.propagator()
        self.n = system.n

    def predict(self, x, closed_loop_from=None):
        # the chain is deterministic given x and v; recover v from two samples
        x = np.asarray(x, dtype=float)
        n = self.n
        A, Bm = self.P[:n, :n], self.P[:n, n:]
        v0 = np.linalg.lstsq(Bm, (x[:, 1] - x[:, 0] @ A.T).T, rcond=None)[0].T
        z = np.concatenate([x[:, 0], v0], axis=1)
        out = np.empty_like(x)
        for k in range(x.shape[1]):
            z = z @ self.P.T
            out[:, k] = z[:, :n]
        return out
