"""Single-neuron dynamics: LIF, adLIF (Euler-forward / symplectic-Euler),
leaky-integrator readout and the balanced harmonic resonate-and-fire model.

Time is in milliseconds throughout, except for the BHRF model whose
parameters are physical (rad/s, 1/s, s).

State-space form of the adLIF neuron with state s = (u, w) and
input (I, S)::

    du/dt = (-u - w + I) / tau_u
    dw/dt = (a*u - w + b*S) / tau_w
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Literal

import numpy as np
from scipy.linalg import expm

Scheme = Literal["ef", "se", "exact", "bilinear"]
DecayForm = Literal["exponential", "linear"]

SCHEMES = ("ef", "se", "exact", "bilinear")


class InvalidParameterError(ValueError):
    """Raised when neuron parameters violate their invariants."""


class DegenerateSystemError(ValueError):
    """Raised when a discretization is undefined for the given parameters."""


@dataclass(frozen=True)
class NeuronParams:
    """Continuous-time adLIF parameters plus the integration step.

    Parameters
    ----------
    tau_u, tau_w : float
        Membrane and adaptation time constants (ms).
    a : float
        Sub-threshold coupling from u to w.
    b : float
        Spike-triggered adaptation strength.
    theta : float
        Firing threshold; ``inf`` disables spiking.
    dt : float
        Integration step (ms).
    """

    tau_u: float
    tau_w: float = 1.0
    a: float = 0.0
    b: float = 0.0
    theta: float = math.inf
    dt: float = 1.0

    def __post_init__(self):
        if not self.tau_u > 0 or not self.tau_w > 0:
            raise InvalidParameterError("time constants must be positive")
        if not self.dt > 0:
            raise InvalidParameterError("dt must be positive")
        if not (self.theta > 0):
            raise InvalidParameterError("theta must be positive or inf")
        if not self.b >= 0:
            raise InvalidParameterError("b must be nonnegative")
        if not math.isfinite(self.a):
            raise InvalidParameterError("a must be finite")


@dataclass(frozen=True)
class DecayCoefficients:
    alpha: float
    beta: float

    @property
    def alpha_bar(self) -> float:
        return 1.0 - self.alpha

    @property
    def beta_bar(self) -> float:
        return 1.0 - self.beta


@dataclass
class NeuronState:
    u: float = 0.0
    w: float = 0.0


@dataclass(frozen=True)
class DiscreteSystem:
    """Discrete update s[k] = A_bar s[k-1] + B_bar (I[k], S[k])."""

    scheme: str
    A_bar: np.ndarray
    B_bar: np.ndarray
    decay: DecayCoefficients
    dt: float


@dataclass(frozen=True)
class StepOutput:
    state: NeuronState
    spike: float
    u_pre_reset: float


def decay_factor(tau, dt, form: DecayForm = "exponential"):
    """Per-step retention factor of a leaky state with time constant ``tau``."""
    tau = np.asarray(tau, dtype=float)
    if form == "exponential":
        out = np.exp(-dt / tau)
    elif form == "linear":
        eps = np.finfo(float).eps
        out = np.clip(1.0 - dt / tau, eps, 1.0 - eps)
    else:
        raise InvalidParameterError(f"unknown decay form {form!r}")
    return out[()] if out.ndim == 0 else out


def decay_coefficients(params: NeuronParams, form: DecayForm = "exponential") -> DecayCoefficients:
    return DecayCoefficients(
        alpha=float(decay_factor(params.tau_u, params.dt, form)),
        beta=float(decay_factor(params.tau_w, params.dt, form)),
    )


def continuous_matrices(params: NeuronParams) -> tuple[np.ndarray, np.ndarray]:
    """System and input matrices of the continuous model (per ms)."""
    tu, tw = params.tau_u, params.tau_w
    A = np.array([[-1.0 / tu, -1.0 / tu], [params.a / tw, -1.0 / tw]])
    B = np.array([[1.0 / tu, 0.0], [0.0, params.b / tw]])
    return A, B


def ef_matrices(alpha, beta, a, b):
    ab, bb = 1.0 - alpha, 1.0 - beta
    A = np.array([[alpha, -ab], [a * bb, beta]])
    B = np.array([[ab, 0.0], [0.0, b * bb]])
    return A, B


def se_matrices(alpha, beta, a, b):
    # The input column also feeds w because w is updated from the new u.
    ab, bb = 1.0 - alpha, 1.0 - beta
    A = np.array([[alpha, -ab], [a * bb * alpha, beta - a * bb * ab]])
    B = np.array([[ab, 0.0], [a * bb * ab, b * bb]])
    return A, B


def zoh(A: np.ndarray, B: np.ndarray, dt: float) -> tuple[np.ndarray, np.ndarray]:
    """Zero-order-hold discretization via one block matrix exponential.

    Avoids inverting ``A`` so the singular case needs no special handling.
    """
    n, m = B.shape
    M = np.zeros((n + m, n + m))
    M[:n, :n] = A * dt
    M[:n, n:] = B * dt
    E = expm(M)
    return E[:n, :n], E[:n, n:]


def bilinear(A: np.ndarray, B: np.ndarray, dt: float) -> tuple[np.ndarray, np.ndarray]:
    n = A.shape[0]
    lhs = np.eye(n) - 0.5 * dt * A
    scale = max(1.0, float(np.abs(lhs).max()))
    if abs(np.linalg.det(lhs)) < 1e-14 * scale**n:
        raise DegenerateSystemError("I - dt/2*A is singular")
    Ad = np.linalg.solve(lhs, np.eye(n) + 0.5 * dt * A)
    Bd = np.linalg.solve(lhs, dt * B)
    return Ad, Bd


def build_discrete_system(
    params: NeuronParams, scheme: Scheme = "se", form: DecayForm = "exponential"
) -> DiscreteSystem:
    """Discrete state and input matrices of one adLIF neuron.

    ``form`` only affects the ``ef`` and ``se`` schemes; ``exact`` and
    ``bilinear`` discretize the continuous matrices directly.
    """
    dc = decay_coefficients(params, form)
    if scheme == "ef":
        A, B = ef_matrices(dc.alpha, dc.beta, params.a, params.b)
    elif scheme == "se":
        A, B = se_matrices(dc.alpha, dc.beta, params.a, params.b)
    elif scheme == "exact":
        A, B = zoh(*continuous_matrices(params), params.dt)
    elif scheme == "bilinear":
        A, B = bilinear(*continuous_matrices(params), params.dt)
    else:
        raise InvalidParameterError(f"unknown scheme {scheme!r}")
    return DiscreteSystem(scheme=scheme, A_bar=A, B_bar=B, decay=dc, dt=params.dt)


def spike_fn(u_hat, theta):
    return (np.asarray(u_hat) > theta).astype(float)


def adlif_update(u, w, I, alpha, beta, a, b, theta, scheme: str):
    """Vectorized adLIF step for the ``ef`` and ``se`` schemes.

    Returns ``(u_new, w_new, spike, u_hat)``. All arguments broadcast.
    """
    ab = 1.0 - alpha
    bb = 1.0 - beta
    u_hat = alpha * u + ab * (I - w)
    S = np.asarray(u_hat > theta).astype(np.result_type(u_hat))
    u_new = u_hat * (1.0 - S)
    if scheme == "ef":
        w_new = beta * w + bb * (a * u + b * S)
    elif scheme == "se":
        w_new = beta * w + bb * (a * u_new + b * S)
    else:
        raise InvalidParameterError(f"adlif_update supports ef/se, got {scheme!r}")
    return u_new, w_new, S, u_hat


def step_adlif(
    state: NeuronState, input_current: float, sys: DiscreteSystem, params: NeuronParams
) -> StepOutput:
    """Advance one adLIF neuron by one step under ``sys.scheme``.

    EF updates w from the previous u, SE from the post-reset u. For the
    ``exact`` and ``bilinear`` schemes the matrix action is applied first and
    the spike then adds its adaptation kick ``B_bar[1, 1] * S``.
    """
    if sys.scheme in ("ef", "se"):
        u, w, S, u_hat = adlif_update(
            np.float64(state.u), np.float64(state.w), np.float64(input_current),
            sys.decay.alpha, sys.decay.beta, params.a, params.b, params.theta, sys.scheme,
        )
        return StepOutput(NeuronState(float(u), float(w)), float(S), float(u_hat))
    A, B = sys.A_bar, sys.B_bar
    u_hat = A[0, 0] * state.u + A[0, 1] * state.w + B[0, 0] * input_current
    w_pre = A[1, 0] * state.u + A[1, 1] * state.w + B[1, 0] * input_current
    S = float(u_hat > params.theta)
    return StepOutput(NeuronState(u_hat * (1.0 - S), w_pre + B[1, 1] * S), S, float(u_hat))


def step_lif(u: float, input_current: float, params: NeuronParams, form: DecayForm = "exponential") -> StepOutput:
    alpha = float(decay_factor(params.tau_u, params.dt, form))
    u_hat = alpha * u + (1.0 - alpha) * input_current
    S = float(u_hat > params.theta)
    return StepOutput(NeuronState(u_hat * (1.0 - S), 0.0), S, u_hat)


def step_li(u, input_current, tau_out, dt):
    if not np.all(np.asarray(tau_out) > 0):
        raise InvalidParameterError("tau_out must be positive")
    gamma = np.exp(-dt / np.asarray(tau_out, dtype=float))
    return gamma * u + (1.0 - gamma) * input_current


# ---------------------------------------------------------------------------
# Balanced harmonic resonate-and-fire (BHRF)
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class BhrfParams:
    """Damped harmonic oscillator neuron.

    Parameters
    ----------
    omega : float
        Natural angular frequency (rad/s).
    damping : float
        Damping coefficient (1/s); the continuous model decays at this rate.
    delta : float
        Integration step (s).
    """

    omega: float
    damping: float
    delta: float = 1e-3

    def __post_init__(self):
        if self.omega < 0 or self.damping < 0 or not self.delta > 0:
            raise InvalidParameterError("need omega >= 0, damping >= 0, delta > 0")


def bhrf_retention(params: BhrfParams, decay: DecayForm = "exponential", literal: bool = False) -> float:
    """Per-step factor applied to u by the damping term.

    The continuous model damps u at rate ``2*damping``; ``literal=True``
    uses ``damping`` instead. ``decay="linear"`` is the plain Euler factor
    ``1 - delta*rate``, ``"exponential"`` its exponential counterpart.
    """
    rate = params.damping if literal else 2.0 * params.damping
    if decay == "exponential":
        return math.exp(-params.delta * rate)
    if decay == "linear":
        return 1.0 - params.delta * rate
    raise InvalidParameterError(f"unknown decay form {decay!r}")


def bhrf_matrix(
    params: BhrfParams, scheme: Literal["ef", "se"], decay: DecayForm = "exponential", literal: bool = False
) -> np.ndarray:
    """State matrix acting on (u, v) for one BHRF step."""
    keep = bhrf_retention(params, decay, literal)
    d, w2 = params.delta, params.omega**2
    if scheme == "ef":
        return np.array([[keep, -d * w2], [d, 1.0]])
    if scheme == "se":
        return np.array([[keep, -d * w2], [d * keep, 1.0 - d * d * w2]])
    raise InvalidParameterError(f"BHRF supports ef/se, got {scheme!r}")


def step_bhrf(
    state: tuple[float, float],
    input_current: float,
    params: BhrfParams,
    scheme: Literal["ef", "se"] = "se",
    decay: DecayForm = "exponential",
    literal: bool = False,
) -> tuple[float, float]:
    u, v = state
    keep = bhrf_retention(params, decay, literal)
    u_new = keep * u + params.delta * (-(params.omega**2) * v + input_current)
    if scheme == "ef":
        v_new = v + params.delta * u
    elif scheme == "se":
        v_new = v + params.delta * u_new
    else:
        raise InvalidParameterError(f"BHRF supports ef/se, got {scheme!r}")
    return u_new, v_new


def simulate_adlif(
    params: NeuronParams,
    inputs,
    scheme: str = "se",
    form: DecayForm = "exponential",
    state: NeuronState | None = None,
):
    """Run one neuron over an input sequence.

    Returns arrays ``u, w, spikes`` of the same length as ``inputs``.
    ``scheme="lif"`` ignores tau_w, a and b.
    """
    inputs = np.asarray(inputs, dtype=float)
    n = inputs.shape[0]
    u_out, w_out, s_out = np.zeros(n), np.zeros(n), np.zeros(n)
    st = state or NeuronState()
    u, w = st.u, st.w
    if scheme == "lif":
        alpha = float(decay_factor(params.tau_u, params.dt, form))
        for k in range(n):
            u_hat = alpha * u + (1.0 - alpha) * inputs[k]
            S = 1.0 if u_hat > params.theta else 0.0
            u = u_hat * (1.0 - S)
            u_out[k], s_out[k] = u, S
        return u_out, w_out, s_out
    sys = build_discrete_system(params, scheme, form)
    if scheme in ("ef", "se"):
        alpha, beta = sys.decay.alpha, sys.decay.beta
        ab, bb = 1.0 - alpha, 1.0 - beta
        a, b, theta = params.a, params.b, params.theta
        for k in range(n):
            u_hat = alpha * u + ab * (inputs[k] - w)
            S = 1.0 if u_hat > theta else 0.0
            u_new = u_hat * (1.0 - S)
            w = beta * w + bb * (a * (u if scheme == "ef" else u_new) + b * S)
            u = u_new
            u_out[k], w_out[k], s_out[k] = u, w, S
        return u_out, w_out, s_out
    for k in range(n):
        out = step_adlif(NeuronState(u, w), inputs[k], sys, params)
        u, w = out.state.u, out.state.w
        u_out[k], w_out[k], s_out[k] = u, w, out.spike
    return u_out, w_out, s_out


__all__ = [
    "SCHEMES", "InvalidParameterError", "DegenerateSystemError", "NeuronParams",
    "DecayCoefficients", "NeuronState", "DiscreteSystem", "StepOutput", "BhrfParams",
    "decay_factor", "decay_coefficients", "continuous_matrices", "ef_matrices", "se_matrices",
    "zoh", "bilinear", "build_discrete_system", "spike_fn", "adlif_update", "step_adlif",
    "step_lif", "step_li", "bhrf_retention", "bhrf_matrix", "step_bhrf", "simulate_adlif",
]
