"""Gradient probes and optimization-based feature visualization.

The state-derivative probe measures how strongly the membrane potential at
step k influences the potential at the read-out step T. A weight gradient
is the correlation of that trace with the input current.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.ndimage import gaussian_filter, gaussian_filter1d

from .neuron import InvalidParameterError, NeuronParams, build_discrete_system, decay_factor
from .signals import CurrentTrace, wavelet_current, wavelet_width_ms
from .stability import analyze

# ---------------------------------------------------------------------------
# State-derivative probe
# ---------------------------------------------------------------------------


def _probe_system(params: NeuronParams, scheme: str, form="exponential"):
    """Transition matrix and the direction a u-perturbation takes in state space.

    Under SE the adaptation is updated from the new u, so a change of u at
    step k also moves w at the same step.
    """
    if scheme == "lif":
        alpha = float(decay_factor(params.tau_u, params.dt, form))
        return np.array([[alpha, 0.0], [0.0, 0.0]]), np.array([1.0, 0.0]), alpha
    if scheme not in ("ef", "se"):
        raise InvalidParameterError("probe supports lif, ef and se")
    sys = build_discrete_system(params, scheme, form)
    c = params.a * sys.decay.beta_bar if scheme == "se" else 0.0
    return sys.A_bar, np.array([1.0, c]), sys.decay.alpha


def state_derivative_trace(params: NeuronParams, scheme: str, T: int, form="exponential") -> np.ndarray:
    """d[k-1] = du[T]/du[k] for k = 1..T, by reverse accumulation.

    Sub-threshold dynamics; the last entry is 1.
    """
    A, direction, _ = _probe_system(params, scheme, form)
    out = np.empty(T)
    lam = np.array([1.0, 0.0])  # du[T]/ds[k] as a row vector
    for k in range(T - 1, -1, -1):
        out[k] = lam @ direction
        lam = lam @ A
    return out


def perturbation_response(params: NeuronParams, scheme: str, T: int, k: int, eps: float = 1e-6, form="exponential") -> float:
    """(u[T] - u0[T]) / eps after adding ``eps`` to u at step k (1-based).

    A forward-simulation oracle for :func:`state_derivative_trace`. The
    perturbation is applied before the adaptation update of step k.
    """
    alpha = float(decay_factor(params.tau_u, params.dt, form))
    beta = float(decay_factor(params.tau_w, params.dt, form))
    u = w = 0.0
    for step in range(1, T + 1):
        if scheme == "lif":
            u = alpha * u
            if step == k:
                u += eps
            continue
        u_new = alpha * u + (1.0 - alpha) * (-w)
        if step == k:
            u_new += eps
        src = u if scheme == "ef" else u_new
        w = beta * w + (1.0 - beta) * params.a * src
        u = u_new
    return u / eps


def weight_gradient_under_input(params: NeuronParams, scheme: str, current, T: int | None = None, form="exponential") -> float:
    """dL/dweight with L = u[T] for a single input weight of value 1.

    Equals sum_k du[T]/du[k] * (1 - alpha) * I[k]; ``(1 - alpha)`` is the
    input gain of one step.
    """
    values = current.values if isinstance(current, CurrentTrace) else np.asarray(current, dtype=float)
    T = len(values) if T is None else T
    if T > len(values):
        values = np.concatenate([values, np.zeros(T - len(values))])
    d = state_derivative_trace(params, scheme, T, form)
    _, _, alpha = _probe_system(params, scheme, form)
    return float(np.dot(d, values[:T]) * (1.0 - alpha))


FIG6_ADLIF = NeuronParams(tau_u=100.0, tau_w=300.0, a=300.0)
FIG6_LIF = NeuronParams(tau_u=100.0)


@dataclass
class GradientProbeResult:
    derivative: np.ndarray
    gradients: dict = field(default_factory=dict)
    period_ms: float = math.nan
    aligned_center_ms: float = math.nan


def wavelet_gradient_curve(params, scheme, T, centers, freq_hz=17.0, amplitude=1.0):
    """Weight gradient as a function of the wavelet centre time."""
    return np.array([
        weight_gradient_under_input(params, scheme, wavelet_current(freq_hz, c, amplitude, T, params.dt), T)
        for c in centers
    ])


def inductive_bias_probe(
    params: NeuronParams = FIG6_ADLIF,
    lif_params: NeuronParams = FIG6_LIF,
    scheme: str = "se",
    T: int = 330,
    freq_hz: float = 17.0,
    amplitude: float = 1.0,
    constant: float = 1.0,
) -> GradientProbeResult:
    """Gradients under constant and wavelet inputs for one adLIF and one LIF neuron.

    The aligned wavelet centre is the one maximising the gradient among
    centres whose wavelet fits inside [T - 2P, T - 3 sigma], with P the
    neuron's intrinsic period. Shifts are reported relative to it.
    """
    ev = analyze(build_discrete_system(params, scheme))
    if ev.f_hz <= 0:
        raise InvalidParameterError("probe neuron must oscillate")
    period = 1000.0 / ev.f_hz
    sigma = wavelet_width_ms(freq_hz)
    centers = np.arange(max(1.0, T - 2.0 * period), T - 3.0 * sigma + 1e-9, 0.25)
    curve = wavelet_gradient_curve(params, scheme, T, centers, freq_hz, amplitude)
    t0 = float(centers[int(np.argmax(curve))])
    res = GradientProbeResult(state_derivative_trace(params, scheme, T), period_ms=period, aligned_center_ms=t0)
    const = np.full(T, constant)
    res.gradients["adlif_constant"] = weight_gradient_under_input(params, scheme, const, T)
    res.gradients["lif_constant"] = weight_gradient_under_input(lif_params, "lif", const, T)
    for name, shift in (("shift_0", 0.0), ("shift_-P/2", -period / 2), ("shift_-3P/4", -3 * period / 4)):
        cur = wavelet_current(freq_hz, t0 + shift, amplitude, T, params.dt)
        res.gradients[name] = weight_gradient_under_input(params, scheme, cur, T)
        res.gradients["lif_" + name] = weight_gradient_under_input(lif_params, "lif", cur, T)
    return res


# ---------------------------------------------------------------------------
# Feature visualization
# ---------------------------------------------------------------------------


@dataclass
class VisualizationConfig:
    """Input-optimization settings; defaults follow the BSD setup."""

    n_iter: int = 400
    eta: float = 0.1
    nu: float = 0.891
    gamma_s: float = 0.1
    sigma_init: float = 5.0
    smoothing: str = "time"  # or "time_space"
    burn_in: float = 0.8
    loss: str = "sum_softmax_ce"
    target: int = 0
    mean_rate: float | None = None  # renormalize to this mean each iteration when set
    seed: int = 0
    eps: float = 1e-6

    def __post_init__(self):
        if self.smoothing not in ("time", "time_space"):
            raise InvalidParameterError("smoothing must be 'time' or 'time_space'")


@dataclass
class VisualizationResult:
    x: np.ndarray  # (T, D)
    losses: np.ndarray  # loss before each iteration, then the final loss
    target_score: float
    config: VisualizationConfig


def smooth_sample(X: np.ndarray, sigma: float, mode: str) -> np.ndarray:
    """Gaussian smoothing truncated at 3 sigma; identity for sigma < 0.5."""
    if sigma < 0.5:
        return X
    if mode == "time":
        return gaussian_filter1d(X, sigma, axis=0, truncate=3.0, mode="reflect")
    return gaussian_filter(X, sigma, truncate=3.0, mode="reflect")


def feature_visualize(net, T: int, cfg: VisualizationConfig) -> VisualizationResult:
    """Optimize an input sample so the frozen network predicts ``cfg.target``.

    Per iteration: normalized gradient step, clip to >= 0, blend with a
    Gaussian-smoothed copy (width decaying linearly to 0), and optionally
    rescale to ``cfg.mean_rate``.
    """
    from .trainer.losses import loss_and_grad, target_probability

    D = net.config.n_inputs
    rng = np.random.default_rng(np.random.SeedSequence(cfg.seed, spawn_key=(21,)))
    X = rng.uniform(0.0, 1.0, (T, D))
    labels = np.array([cfg.target])
    losses = []
    for k in range(cfg.n_iter):
        trace, y = net.forward(X[None])
        loss, g = loss_and_grad(y, labels, cfg.loss, cfg.burn_in)
        losses.append(loss)
        G = net.backward(trace, g, input_grad=True)["input"][0]
        zeta = max(float(np.abs(G).max()), cfg.eps)
        X = X - cfg.eta * G / zeta
        np.maximum(X, 0.0, out=X)
        sigma = cfg.sigma_init * (1.0 - k / cfg.n_iter)
        X = cfg.nu * X + cfg.gamma_s * smooth_sample(X, sigma, cfg.smoothing)
        if cfg.mean_rate is not None:
            m = X.mean()
            if m > 0:
                X = X * (cfg.mean_rate / m)
    _, y = net.forward(X[None], record=False)
    final, _ = loss_and_grad(y, labels, cfg.loss, cfg.burn_in)
    losses.append(final)
    score = float(target_probability(y, labels, cfg.loss, cfg.burn_in)[0])
    return VisualizationResult(X, np.asarray(losses), score, cfg)


def heatmap_rows(X: np.ndarray) -> list[dict]:
    return [{"t": t, "channel": c, "value": float(X[t, c])} for t in range(X.shape[0]) for c in range(X.shape[1])]


__all__ = [
    "state_derivative_trace", "perturbation_response", "weight_gradient_under_input", "FIG6_ADLIF", "FIG6_LIF",
    "GradientProbeResult", "wavelet_gradient_curve", "inductive_bias_probe", "VisualizationConfig",
    "VisualizationResult", "smooth_sample", "feature_visualize", "heatmap_rows",
]
