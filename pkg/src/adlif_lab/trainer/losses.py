"""Loss functions over batch-major network outputs (B, T, C).

Cross-entropy losses are averaged over the batch and summed over time;
the MSE averages over every included (step, output) entry. Steps inside
the burn-in window contribute neither loss nor gradient.
"""
from __future__ import annotations

import math

import numpy as np


def burn_in_steps(burn_in, T: int) -> int:
    """Number of discarded leading steps.

    A float is a fraction of ``T``; an int is a step count.
    """
    if isinstance(burn_in, (bool, np.bool_)):
        raise ValueError("burn_in must be a number")
    if isinstance(burn_in, (float, np.floating)):
        if not (0.0 <= burn_in <= 1.0):
            raise ValueError("fractional burn_in must lie in [0, 1]")
        return int(math.floor(burn_in * T + 1e-9))
    n = int(burn_in)
    if not (0 <= n <= T):
        raise ValueError("burn_in steps must lie in [0, T]")
    return n


def softmax(x, axis=-1):
    e = np.exp(x - x.max(axis=axis, keepdims=True))
    return e / e.sum(axis=axis, keepdims=True)


def log_softmax(x, axis=-1):
    m = x.max(axis=axis, keepdims=True)
    return x - m - np.log(np.exp(x - m).sum(axis=axis, keepdims=True))


def _check_labels(labels, C):
    labels = np.asarray(labels)
    if labels.size and (labels.min() < 0 or labels.max() >= C):
        raise ValueError("label out of range")
    return labels.astype(int)


def class_scores(y, kind: str = "sum_softmax_ce", burn_in=0):
    """Per-class evidence used for prediction, shape (B, C)."""
    y = np.asarray(y, dtype=np.float64)
    nb = burn_in_steps(burn_in, y.shape[1])
    yy = y[:, nb:]
    if kind == "softmax_sum_ce":
        return yy.sum(axis=1)
    return softmax(yy, axis=-1).sum(axis=1)


def target_probability(y, labels, kind: str = "sum_softmax_ce", burn_in=0):
    """Softmax of the class evidence at the target class; exp(-loss) per sample."""
    s = class_scores(y, kind, burn_in)
    return softmax(s)[np.arange(s.shape[0]), np.asarray(labels, dtype=int)]


def loss_and_grad(y, target, kind: str, burn_in=0):
    """Return ``(loss, dloss/dy)`` for outputs ``y`` of shape (B, T, C)."""
    y = np.asarray(y, dtype=np.float64)
    B, T, C = y.shape
    nb = burn_in_steps(burn_in, T)
    grad = np.zeros_like(y)
    if nb >= T:
        return 0.0, grad
    yy = y[:, nb:]
    if kind == "mse":
        tgt = np.asarray(target, dtype=np.float64)
        if tgt.shape != y.shape:
            raise ValueError("MSE target must match output shape")
        diff = yy - tgt[:, nb:]
        n = diff.size
        grad[:, nb:] = 2.0 * diff / n
        return float(np.sum(diff * diff) / n), grad
    if kind == "per_step_ce":
        lab = np.asarray(target)
        if lab.ndim == 1:
            lab = np.repeat(lab[:, None], T, axis=1)
        lab = _check_labels(lab, C)[:, nb:]
        ls = log_softmax(yy)
        onehot = np.zeros_like(yy)
        np.put_along_axis(onehot, lab[..., None], 1.0, axis=-1)
        loss = -np.sum(ls * onehot) / B
        grad[:, nb:] = (np.exp(ls) - onehot) / B
        return float(loss), grad
    labels = _check_labels(target, C)
    onehot = np.zeros((B, C))
    onehot[np.arange(B), labels] = 1.0
    if kind == "softmax_sum_ce":
        s = yy.sum(axis=1)
        ls = log_softmax(s)
        loss = -np.sum(ls * onehot) / B
        grad[:, nb:] = ((np.exp(ls) - onehot) / B)[:, None, :]
        return float(loss), grad
    if kind == "sum_softmax_ce":
        p = softmax(yy, axis=-1)
        s = p.sum(axis=1)
        ls = log_softmax(s)
        loss = -np.sum(ls * onehot) / B
        gs = (np.exp(ls) - onehot) / B  # dL/ds
        g = gs[:, None, :]
        grad[:, nb:] = p * (g - np.sum(p * g, axis=-1, keepdims=True))
        return float(loss), grad
    raise ValueError(f"unknown loss {kind!r}")
