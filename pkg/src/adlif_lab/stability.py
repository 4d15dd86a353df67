"""Eigenvalue analysis of single-neuron sub-threshold dynamics.

Closed forms for decay rate ``r``, oscillation angle ``phi`` and intrinsic
frequency of the continuous, Euler-forward and symplectic-Euler adLIF
systems, their stability bounds on ``a``, and the frequency-to-``a``
inverse of the symplectic-Euler map.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Literal

import numpy as np

from .neuron import (
    BhrfParams,
    DiscreteSystem,
    InvalidParameterError,
    NeuronParams,
    bhrf_matrix,
    decay_factor,
)

Regime = Literal["underdamped", "critically_damped", "overdamped"]

CRITICAL_RTOL = 1e-12


@dataclass(frozen=True)
class EigenAnalysis:
    """Spectral summary of a 2x2 update.

    ``phi`` is radians per step in [0, pi]; ``f_hz`` assumes ``dt`` in ms.
    """

    lambda1: complex
    lambda2: complex
    r: float
    phi: float
    f_hz: float
    regime: str
    tau_eff: float
    stable: bool
    dt: float

    @property
    def r_per_ms(self) -> float:
        return self.r ** (1.0 / self.dt)


@dataclass(frozen=True)
class StabilityBounds:
    scheme: str
    a_min: float
    a_osc_low: float
    a_osc_high: float
    a_max: float


def nyquist_hz(dt: float) -> float:
    return 1000.0 / (2.0 * dt)


def eig2x2(a00, a01, a10, a11):
    """Batched closed-form eigen-solve of [[a00, a01], [a10, a11]].

    Returns ``(half_trace, im, disc, r, big, small)``. When ``disc < 0`` the
    eigenvalues are ``half_trace +- i*im``; otherwise they are the real roots
    ``big`` (larger modulus, sign-matched to avoid cancellation) and
    ``small``.
    """
    a00, a01, a10, a11 = np.broadcast_arrays(*(np.asarray(x, dtype=float) for x in (a00, a01, a10, a11)))
    half_tr = 0.5 * (a00 + a11)
    det = a00 * a11 - a01 * a10
    # (tr/2)^2 - det written to reduce cancellation
    disc = 0.25 * (a00 - a11) ** 2 + a01 * a10
    cplx = disc < 0
    sq = np.sqrt(np.abs(disc))
    sign = np.where(half_tr >= 0, 1.0, -1.0)
    big = np.where(cplx, half_tr, half_tr + sign * sq)
    with np.errstate(divide="ignore", invalid="ignore"):
        small = np.where(cplx | (big == 0), half_tr - sign * sq, det / big)
    im = np.where(cplx, sq, 0.0)
    r = np.where(cplx, np.hypot(half_tr, im), np.maximum(np.abs(big), np.abs(small)))
    return half_tr, im, disc, r, big, small


def _classify(half_tr, disc):
    scale = np.maximum(half_tr**2, np.finfo(float).tiny)
    crit = np.abs(disc) <= CRITICAL_RTOL * scale
    return np.where(crit, "critically_damped", np.where(disc < 0, "underdamped", "overdamped"))


def _phi(half_tr, im, disc, regime):
    phi = np.where(disc < 0, np.arctan2(im, half_tr), 0.0)
    crit_real = (regime == "critically_damped") & (disc >= 0)
    return np.where(crit_real & (half_tr < 0), math.pi, phi)


def spectral_arrays(a00, a01, a10, a11, dt=1.0):
    """Vectorized ``(r, phi, f_hz, regime)`` over arrays of matrix entries."""
    half_tr, im, disc, r, _, _ = eig2x2(a00, a01, a10, a11)
    regime = _classify(half_tr, disc)
    phi = _phi(half_tr, im, disc, regime)
    return r, phi, phi * 1000.0 / (2.0 * math.pi * dt), regime


def analyze_matrix(A: np.ndarray, dt: float = 1.0) -> EigenAnalysis:
    half_tr, im, disc, r, big, small = (float(x) for x in eig2x2(A[0, 0], A[0, 1], A[1, 0], A[1, 1]))
    regime = str(_classify(half_tr, disc))
    phi = float(_phi(half_tr, im, disc, np.asarray(regime)))
    if disc < 0:
        l1, l2 = complex(half_tr, im), complex(half_tr, -im)
    else:
        l1, l2 = complex(big), complex(small)
    if regime == "overdamped":
        phi = 0.0
    return EigenAnalysis(
        lambda1=l1,
        lambda2=l2,
        r=r,
        phi=phi,
        f_hz=phi * 1000.0 / (2.0 * math.pi * dt),
        regime=regime,
        tau_eff=_tau_eff(r, dt),
        stable=r < 1.0,
        dt=dt,
    )


def _tau_eff(r: float, dt: float) -> float:
    if r <= 0:
        return 0.0
    if r >= 1:
        return math.inf
    return -dt / math.log(r)


def analyze(sys: DiscreteSystem, dt: float | None = None) -> EigenAnalysis:
    """Eigen-analysis of a discrete adLIF update matrix."""
    return analyze_matrix(sys.A_bar, sys.dt if dt is None else dt)


def continuous_eigenvalues(params: NeuronParams) -> EigenAnalysis:
    """Eigenvalues of the continuous system matrix (per ms).

    ``r`` is the equivalent per-step decay ``exp(max Re(lambda) * dt)`` and
    ``phi`` the rotation per step, so the fields compare directly with the
    discrete analyses.
    """
    tu, tw, a, dt = params.tau_u, params.tau_w, params.a, params.dt
    s = tu + tw
    disc = (tu - tw) ** 2 - 4.0 * a * tu * tw
    denom = 2.0 * tu * tw
    scale = max(s * s, np.finfo(float).tiny)
    if disc < 0:
        im = math.sqrt(-disc) / denom
        l1, l2 = complex(-s / denom, im), complex(-s / denom, -im)
    else:
        sq = math.sqrt(disc)
        big = -(s + sq) / denom
        # product of roots = (1 + a) / (tu * tw)
        small = ((1.0 + a) / (tu * tw)) / big if big != 0 else -(s - sq) / denom
        l1, l2 = complex(small), complex(big)
        im = 0.0
    if abs(disc) <= CRITICAL_RTOL * scale:
        regime = "critically_damped"
    else:
        regime = "underdamped" if disc < 0 else "overdamped"
    max_re = max(l1.real, l2.real)
    r = math.exp(max_re * dt)
    phi = im * dt
    return EigenAnalysis(
        lambda1=l1,
        lambda2=l2,
        r=r,
        phi=phi,
        f_hz=im * 1000.0 / (2.0 * math.pi),
        regime=regime,
        tau_eff=-1.0 / max_re if max_re < 0 else math.inf,
        stable=max_re < 0,
        dt=dt,
    )


def _decays(tau_u, tau_w, dt, form="exponential"):
    alpha = decay_factor(tau_u, dt, form)
    beta = decay_factor(tau_w, dt, form)
    return alpha, beta, 1.0 - alpha, 1.0 - beta


def bounds(params: NeuronParams, scheme: Literal["ef", "se"], form="exponential") -> StabilityBounds:
    """Closed-form stability and oscillation bounds on ``a``."""
    alpha, beta, ab, bb = _decays(params.tau_u, params.tau_w, params.dt, form)
    p = ab * bb
    if scheme == "ef":
        a0 = (alpha - beta) ** 2 / (4.0 * p)
        amax = (1.0 - alpha * beta) / p
        return StabilityBounds("ef", -1.0, float(a0), float(amax), float(amax))
    if scheme == "se":
        sa, sb = math.sqrt(alpha), math.sqrt(beta)
        a1 = (sb - sa) ** 2 / p
        a2 = (sb + sa) ** 2 / p
        amax = (1.0 + alpha) * (1.0 + beta) / p
        return StabilityBounds("se", -1.0, float(a1), float(a2), float(amax))
    raise InvalidParameterError(f"bounds supports ef/se, got {scheme!r}")


def a_for_frequency(tau_u: float, tau_w: float, dt: float, f_target: float, scheme: str = "se", form="exponential") -> float:
    """The unique ``a`` giving a symplectic-Euler neuron intrinsic frequency ``f_target`` (Hz)."""
    if scheme != "se":
        raise InvalidParameterError("frequency inverse exists only for the symplectic-Euler scheme")
    fn = nyquist_hz(dt)
    if not (0.0 < f_target <= fn):
        raise InvalidParameterError(f"f_target must lie in (0, {fn}] Hz")
    alpha, beta, ab, bb = _decays(tau_u, tau_w, dt, form)
    phi = 2.0 * math.pi * f_target * dt / 1000.0
    return float((alpha + beta - 2.0 * math.sqrt(alpha * beta) * math.cos(phi)) / (ab * bb))


def ef_max_frequency(tau_u, tau_w, dt: float, form="exponential"):
    """Highest intrinsic frequency (Hz) a stable Euler-forward neuron can reach."""
    alpha, beta, ab, bb = _decays(tau_u, tau_w, dt, form)
    s = alpha + beta
    # arccos(s/2) with 2 - s computed without cancellation
    phi = np.arctan2(np.sqrt((ab + bb) * (2.0 + s)), s)
    out = phi * 1000.0 / (2.0 * math.pi * dt)
    return float(out) if np.ndim(out) == 0 else out


def discrete_entries(tau_u, tau_w, a, dt, scheme: str, form="exponential"):
    """Matrix entries (a00, a01, a10, a11) for arrays of neuron parameters."""
    alpha, beta, ab, bb = _decays(tau_u, tau_w, dt, form)
    a = np.asarray(a, dtype=float)
    if scheme == "ef":
        return alpha, -ab, a * bb, beta
    if scheme == "se":
        return alpha, -ab, a * bb * alpha, beta - a * bb * ab
    raise InvalidParameterError(f"expected ef/se, got {scheme!r}")


def spectral_radius(tau_u, tau_w, a, dt=1.0, scheme="se", form="exponential"):
    """Vectorized decay rate ``r`` for arrays of (tau_u, tau_w, a)."""
    return eig2x2(*discrete_entries(tau_u, tau_w, a, dt, scheme, form))[3]


def continuous_radius(tau_u, tau_w, a, dt=1.0):
    """Vectorized per-step ``exp(max Re(lambda) dt)`` of the continuous model."""
    tau_u, tau_w, a = (np.asarray(x, dtype=float) for x in (tau_u, tau_w, a))
    s = tau_u + tau_w
    disc = (tau_u - tau_w) ** 2 - 4.0 * a * tau_u * tau_w
    max_re = (-s + np.sqrt(np.maximum(disc, 0.0))) / (2.0 * tau_u * tau_w)
    return np.exp(max_re * dt)


def sweep_grid(
    tau_u_range=(5.0, 25.0),
    tau_w_range=(60.0, 300.0),
    a_range=(0.0, 120.0),
    scheme: str = "se",
    n_points=(10, 10, 10),
    dt: float = 1.0,
    form="exponential",
) -> list[dict]:
    """Evaluate every point of a uniform (tau_u, tau_w, a) grid.

    ``scheme`` is ``"ef"``, ``"se"`` or ``"continuous"``. Rows follow the
    CSV columns tau_u, tau_w, a, scheme, re_lambda, im_lambda, r, f_hz,
    regime, stable.
    """
    if isinstance(n_points, int):
        n_points = (n_points,) * 3
    axes = []
    for (lo, hi), n in zip((tau_u_range, tau_w_range, a_range), n_points):
        if n < 1 or not (lo <= hi):
            raise InvalidParameterError("empty sweep range")
        axes.append(np.linspace(lo, hi, n))
    TU, TW, AA = (x.ravel() for x in np.meshgrid(*axes, indexing="ij"))
    if scheme == "continuous":
        rows = []
        for tu, tw, a in zip(TU, TW, AA):
            ev = continuous_eigenvalues(NeuronParams(tau_u=tu, tau_w=tw, a=a, dt=dt))
            rows.append(_row(tu, tw, a, scheme, ev.lambda1, ev.r, ev.f_hz, ev.regime, ev.stable))
        return rows
    entries = discrete_entries(TU, TW, AA, dt, scheme, form)
    half_tr, im, disc, r, _, _ = eig2x2(*entries)
    regime = _classify(half_tr, disc)
    phi = _phi(half_tr, im, disc, regime)
    f = phi * 1000.0 / (2.0 * math.pi * dt)
    return [
        _row(TU[i], TW[i], AA[i], scheme, complex(half_tr[i], im[i]), r[i], f[i], str(regime[i]), bool(r[i] < 1.0))
        for i in range(TU.size)
    ]


def _row(tu, tw, a, scheme, lam, r, f, regime, stable):
    return {
        "tau_u": float(tu), "tau_w": float(tw), "a": float(a), "scheme": scheme,
        "re_lambda": float(lam.real), "im_lambda": float(lam.imag), "r": float(r),
        "f_hz": float(f), "regime": regime, "stable": bool(stable),
    }


def bhrf_effective_map(
    omegas,
    dampings,
    delta: float = 1e-3,
    scheme: Literal["ef", "se"] = "se",
    decay="exponential",
    literal: bool = False,
) -> list[dict]:
    """Effective frequency and damping of a discretized BHRF neuron on a grid.

    ``omega_eff = phi / delta`` (rad/s) and ``b_eff = -ln(r) / delta`` (1/s).
    Overdamped points get ``omega_eff = nan``. ``unstable`` marks
    ``r > 1 + 1e-12`` so the undamped symplectic rotation counts as marginal.
    """
    rows = []
    for om in np.asarray(omegas, dtype=float).ravel():
        for dmp in np.asarray(dampings, dtype=float).ravel():
            M = bhrf_matrix(BhrfParams(float(om), float(dmp), delta), scheme, decay, literal)
            ev = analyze_matrix(M, dt=delta * 1000.0)
            under = ev.regime == "underdamped"
            rows.append({
                "omega": float(om),
                "damping": float(dmp),
                "omega_eff": ev.phi / delta if under else math.nan,
                "b_eff": -math.log(ev.r) / delta if ev.r > 0 else math.inf,
                "r": ev.r,
                "regime": ev.regime,
                "stable": ev.r < 1.0,
                "unstable": ev.r > 1.0 + 1e-12,
            })
    return rows


__all__ = [
    "EigenAnalysis", "StabilityBounds", "nyquist_hz", "eig2x2", "spectral_arrays", "analyze_matrix",
    "analyze", "continuous_eigenvalues", "bounds", "a_for_frequency", "ef_max_frequency",
    "discrete_entries", "spectral_radius", "continuous_radius", "sweep_grid", "bhrf_effective_map",
]
