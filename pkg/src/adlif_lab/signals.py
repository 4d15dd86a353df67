"""Input generators and response metrics for single-neuron probes."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .neuron import InvalidParameterError, NeuronParams, simulate_adlif

# accumulator comparisons tolerate the rounding of repeated float additions
_ACC_TOL = 1e-9


@dataclass(frozen=True)
class SpikeTrain:
    spikes: np.ndarray
    dt: float = 1.0


@dataclass(frozen=True)
class CurrentTrace:
    values: np.ndarray
    dt: float = 1.0


def round_half_up(x):
    return np.floor(np.asarray(x, dtype=float) + 0.5).astype(int)


def sfm_rate(freq_hz: float, T: int, dt: float = 1.0) -> np.ndarray:
    """Per-step spike rate 0.2*(0.5 + 0.5*sin(2*pi*t*F*dt)) for t = 1..T."""
    t = np.arange(1, T + 1)
    return 0.2 * (0.5 + 0.5 * np.sin(2.0 * math.pi * t * freq_hz * dt / 1000.0))


def sfm_encode(freq_hz: float, T: int, dt: float = 1.0) -> SpikeTrain:
    """Spike-frequency-modulated encoding of a sinusoid.

    A deterministic integrate-and-fire accumulator: the rate is added to
    ``v`` each step, a spike is emitted when ``v`` reaches 1 and then
    subtracted. Mean rate is 0.1 spikes per step and peak rate 0.2.
    """
    if freq_hz < 0 or T < 1:
        raise InvalidParameterError("need freq_hz >= 0 and T >= 1")
    rate = sfm_rate(freq_hz, T, dt)
    spikes = np.zeros(T)
    v = 0.0
    for k in range(T):
        v += rate[k]
        if v >= 1.0 - _ACC_TOL:
            spikes[k] = 1.0
            v -= 1.0
    return SpikeTrain(spikes, dt)


def tonic_train(rate_hz: float, duration: int, dt: float = 1.0) -> SpikeTrain:
    """Regular spikes every round(1000 / (rate * dt)) steps, the first one
    at that interval (steps are 1-based, so index ``interval - 1``)."""
    if rate_hz < 0 or rate_hz > 1000.0 / dt:
        raise InvalidParameterError("rate must lie in [0, 1000/dt] Hz")
    spikes = np.zeros(duration)
    if rate_hz == 0:
        return SpikeTrain(spikes, dt)
    interval = int(round_half_up(1000.0 / (rate_hz * dt)))
    spikes[interval - 1 :: interval] = 1.0
    return SpikeTrain(spikes, dt)


def spike_times(train: SpikeTrain) -> np.ndarray:
    """1-based step indices of the spikes."""
    return np.flatnonzero(train.spikes) + 1


def spike_triplet(rate_hz: float, dt: float = 1.0, n: int = 3, onset: float = 0.0) -> np.ndarray:
    """Times (steps) of ``n`` spikes at the given rate, each rounded from the exact time."""
    period = 1000.0 / (rate_hz * dt)
    return round_half_up(onset + period * np.arange(1, n + 1))


def train_from_times(times, duration: int, dt: float = 1.0) -> SpikeTrain:
    spikes = np.zeros(duration)
    spikes[np.asarray(times, dtype=int) - 1] = 1.0
    return SpikeTrain(spikes, dt)


def wavelet_width_ms(center_freq_hz: float) -> float:
    """Gaussian width whose first derivative peaks spectrally at ``center_freq_hz``."""
    return 1000.0 / (2.0 * math.pi * center_freq_hz)


def wavelet_current(
    center_freq_hz: float, center_time: float, amplitude: float, duration: int, dt: float = 1.0
) -> CurrentTrace:
    """First derivative of a Gaussian, negated so the positive lobe comes first.

    Scaled so the peak magnitude equals ``amplitude``. ``center_time`` is in
    ms; samples sit at t = k*dt for k = 1..duration.
    """
    if not center_freq_hz > 0:
        raise InvalidParameterError("center frequency must be positive")
    sigma = wavelet_width_ms(center_freq_hz)
    t = np.arange(1, duration + 1) * dt
    x = (t - center_time) / sigma
    values = amplitude * (-x) * np.exp(0.5 - 0.5 * x * x)
    return CurrentTrace(values, dt)


def _as_array(inp) -> np.ndarray:
    if isinstance(inp, SpikeTrain):
        return np.asarray(inp.spikes, dtype=float)
    if isinstance(inp, CurrentTrace):
        return np.asarray(inp.values, dtype=float)
    return np.asarray(inp, dtype=float)


def membrane_response(params: NeuronParams, scheme: str, inp, weight: float = 1.0) -> np.ndarray:
    """Sub-threshold membrane trace under ``weight * input``."""
    p = NeuronParams(params.tau_u, params.tau_w, params.a, params.b, math.inf, params.dt)
    u, _, _ = simulate_adlif(p, weight * _as_array(inp), scheme)
    return u


def rms_response(params: NeuronParams, scheme: str, inp, weight: float = 1.0, duration: int | None = None) -> float:
    """Root mean square of the sub-threshold membrane potential.

    ``duration`` truncates the stimulus (steps); defaults to its full length.
    """
    x = _as_array(inp)
    if duration is not None:
        x = x[:duration]
    u = membrane_response(params, scheme, x, weight)
    return float(np.sqrt(np.mean(u * u)))


FIG2_RESONATOR = NeuronParams(tau_u=15.0, tau_w=60.0, a=120.0)
FIG2_SLOW_RESONATOR = NeuronParams(tau_u=125.0, tau_w=200.0, a=100.0)
FIG2_LIF = NeuronParams(tau_u=125.0)


__all__ = [
    "SpikeTrain", "CurrentTrace", "round_half_up", "sfm_rate", "sfm_encode", "tonic_train",
    "spike_times", "spike_triplet", "train_from_times", "wavelet_width_ms", "wavelet_current",
    "membrane_response", "rms_response", "FIG2_RESONATOR", "FIG2_SLOW_RESONATOR", "FIG2_LIF",
]
