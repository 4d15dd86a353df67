"""Synthetic tasks: the N-mass spring chain and burst sequence detection (BSD)."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import expm

from .artifacts import load_arrays, save_arrays
from .neuron import InvalidParameterError

# ---------------------------------------------------------------------------
# Spring-mass chain
# ---------------------------------------------------------------------------


def stiffness_matrix(springs) -> np.ndarray:
    """Tridiagonal stiffness of a chain fixed at both ends.

    ``springs`` holds the n+1 coefficients; spring i connects mass i-1 and
    mass i, with the walls at both ends.
    """
    s = np.asarray(springs, dtype=float)
    n = s.size - 1
    K = np.zeros((n, n))
    idx = np.arange(n)
    K[idx, idx] = s[:-1] + s[1:]
    K[idx[1:], idx[:-1]] = -s[1:-1]
    K[idx[:-1], idx[1:]] = -s[1:-1]
    return K


@dataclass(frozen=True)
class SpringMassSystem:
    springs: np.ndarray
    masses: np.ndarray
    dt_sim: float = 2.5
    seed: int | None = None

    @property
    def n(self) -> int:
        return self.masses.size

    @property
    def stiffness(self) -> np.ndarray:
        return stiffness_matrix(self.springs)

    def block_matrix(self) -> np.ndarray:
        """First-order system matrix acting on (x, v), per second."""
        n = self.n
        M = np.zeros((2 * n, 2 * n))
        M[:n, n:] = np.eye(n)
        M[n:, :n] = -self.stiffness / self.masses[:, None]
        return M

    def propagator(self, dt_ms: float | None = None) -> np.ndarray:
        dt = (self.dt_sim if dt_ms is None else dt_ms) / 1000.0
        return expm(self.block_matrix() * dt)

    def energy(self, x, v) -> np.ndarray:
        x, v = np.atleast_2d(x), np.atleast_2d(v)
        kin = 0.5 * np.einsum("ti,i,ti->t", v, self.masses, v)
        pot = 0.5 * np.einsum("ti,ij,tj->t", x, self.stiffness, x)
        return kin + pot

    def eigenfrequencies(self) -> np.ndarray:
        """Angular frequencies (rad/s) from the generalized eigenproblem."""
        minv = 1.0 / np.sqrt(self.masses)
        w2 = np.linalg.eigvalsh(minv[:, None] * self.stiffness * minv[None, :])
        return np.sqrt(np.maximum(w2, 0.0))


def spring_mass_generate(
    n: int = 4, spring_range=(500.0, 10000.0), seed: int = 0, masses=1.0, dt_sim: float = 2.5
) -> SpringMassSystem:
    """Draw spring coefficients uniformly from ``spring_range`` (N/m)."""
    lo, hi = float(spring_range[0]), float(spring_range[1])
    if not (0 < lo <= hi):
        raise InvalidParameterError("need 0 < lo <= hi")
    rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(0,)))
    springs = lo + (hi - lo) * rng.random(n + 1)
    m = np.broadcast_to(np.asarray(masses, dtype=float), (n,)).copy()
    if np.any(m <= 0):
        raise InvalidParameterError("masses must be positive")
    return SpringMassSystem(springs=springs, masses=m, dt_sim=dt_sim, seed=seed)


def simulate(sys: SpringMassSystem, x0, v0, T_steps: int, return_velocity: bool = False):
    """Exact trajectory sampled every ``dt_sim`` ms, starting with ``x0``.

    Returns a (T_steps, n) displacement array (and velocities if asked).
    """
    n = sys.n
    P = sys.propagator()
    z = np.concatenate([np.asarray(x0, dtype=float), np.asarray(v0, dtype=float)])
    if z.shape != (2 * n,):
        raise InvalidParameterError("x0 and v0 must have length n")
    traj = np.empty((T_steps, 2 * n))
    for k in range(T_steps):
        traj[k] = z
        z = P @ z
    if return_velocity:
        return traj[:, :n], traj[:, n:]
    return traj[:, :n]


@dataclass
class TrajectoryDataset:
    samples: np.ndarray  # (n_samples, T, n)
    dt_sim: float
    springs: np.ndarray
    seed: int

    def inputs_targets(self):
        """One-step-ahead pairs: input x[k], target x[k+1]."""
        return self.samples[:, :-1], self.samples[:, 1:]


def spring_mass_dataset(sys: SpringMassSystem, n_samples: int, T_steps: int = 200, seed: int = 0) -> TrajectoryDataset:
    """Trajectories from x0 ~ N(0, 1) per mass and zero initial velocity."""
    rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(1,)))
    x0 = rng.standard_normal((n_samples, sys.n))
    P = sys.propagator()
    z = np.concatenate([x0, np.zeros_like(x0)], axis=1)
    out = np.empty((n_samples, T_steps, sys.n))
    for k in range(T_steps):
        out[:, k] = z[:, : sys.n]
        z = z @ P.T
    return TrajectoryDataset(out, sys.dt_sim, sys.springs.copy(), seed)


def eigenfrequencies_uniform(n: int, s: float) -> np.ndarray:
    """Angular frequencies (rad/s) of n unit masses joined by n+1 equal springs."""
    if not s > 0:
        raise InvalidParameterError("s must be positive")
    j = np.arange(1, n + 1)
    return 2.0 * math.sqrt(s) * np.sin(j * math.pi / (2.0 * (n + 1)))


def spring_range_for_bandwidth(f_min_hz: float, f_max_hz: float, n: int) -> tuple[float, float]:
    """Spring range whose extreme modes approximate [f_min, f_max].

    Uses the large-n approximations w_max ~ 2 sqrt(s) and
    w_min ~ pi sqrt(s) / (n + 1).
    """
    if not (0 < f_min_hz < f_max_hz):
        raise InvalidParameterError("need 0 < f_min < f_max")
    s_hi = (math.pi * f_max_hz) ** 2
    s_lo = (2.0 * f_min_hz * (n + 1)) ** 2
    if s_lo > s_hi:
        raise InvalidParameterError(
            f"infeasible: lowest-mode constraint needs s >= {s_lo:.6g} but highest-mode constraint needs s <= {s_hi:.6g}"
        )
    return s_lo, s_hi


def save_trajectories(directory, ds: TrajectoryDataset, meta: dict | None = None):
    m = {"dt_sim": ds.dt_sim, "springs": ds.springs.tolist(), "seed": ds.seed, "kind": "spring_mass"}
    m.update(meta or {})
    return save_arrays(directory, {"displacements": ds.samples.astype("<f4")}, m)


def load_trajectories(directory) -> TrajectoryDataset:
    arrays, meta = load_arrays(directory)
    return TrajectoryDataset(
        arrays["displacements"].astype(float), meta["dt_sim"], np.asarray(meta["springs"]), meta["seed"]
    )


# ---------------------------------------------------------------------------
# Burst sequence detection
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class BsdSpec:
    """Class signatures for the burst sequence detection task.

    ``class_neurons[c]`` lists the 3 input channels that burst for class
    ``c`` and ``class_times[c]`` their burst steps.
    """

    n_classes: int
    class_neurons: np.ndarray
    class_times: np.ndarray
    n_inputs: int = 10
    T: int = 200
    burst_window: tuple[int, int] = (20, 170)
    p_min: float = 0.05
    p_max: float = 0.8
    burst_width: float = 4.0
    seed: int = 0
    extra: dict = field(default_factory=dict)

    def signature(self, c: int) -> frozenset:
        return frozenset(zip(self.class_neurons[c].tolist(), self.class_times[c].tolist()))

    def to_dict(self) -> dict:
        return {
            "n_classes": self.n_classes,
            "class_neurons": self.class_neurons.tolist(),
            "class_times": self.class_times.tolist(),
            "n_inputs": self.n_inputs,
            "T": self.T,
            "burst_window": list(self.burst_window),
            "p_min": self.p_min,
            "p_max": self.p_max,
            "burst_width": self.burst_width,
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "BsdSpec":
        return cls(
            n_classes=d["n_classes"],
            class_neurons=np.asarray(d["class_neurons"], dtype=int),
            class_times=np.asarray(d["class_times"], dtype=int),
            n_inputs=d["n_inputs"],
            T=d["T"],
            burst_window=tuple(d["burst_window"]),
            p_min=d["p_min"],
            p_max=d["p_max"],
            burst_width=d.get("burst_width", 4.0),
            seed=d["seed"],
        )


def make_bsd_spec(
    n_classes: int = 10,
    seed: int = 0,
    n_inputs: int = 10,
    T: int = 200,
    neurons_per_class: int = 3,
    burst_window=(20, 170),
    p_min: float = 0.05,
    p_max: float = 0.8,
) -> BsdSpec:
    """Draw class signatures, resampling any class whose signature collides."""
    if neurons_per_class > n_inputs:
        raise InvalidParameterError("more class neurons than inputs")
    lo, hi = burst_window
    if not (0 <= lo <= hi < T):
        raise InvalidParameterError("burst window must lie inside [0, T)")
    rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(0,)))
    neurons = np.zeros((n_classes, neurons_per_class), dtype=int)
    times = np.zeros((n_classes, neurons_per_class), dtype=int)
    seen: set = set()
    for c in range(n_classes):
        while True:
            nn = np.sort(rng.choice(n_inputs, size=neurons_per_class, replace=False))
            tt = rng.integers(lo, hi + 1, size=neurons_per_class)
            sig = frozenset(zip(nn.tolist(), tt.tolist()))
            if sig not in seen:
                break
        seen.add(sig)
        neurons[c], times[c] = nn, tt
    return BsdSpec(n_classes, neurons, times, n_inputs, T, (lo, hi), p_min, p_max, seed=seed)


def burst_profile(T: int, t_burst, width: float = 4.0) -> np.ndarray:
    """exp(-(t - t_burst)^2 / width) over t = 0..T-1, normalized to peak 1."""
    t = np.arange(T)[:, None]
    f = np.exp(-((t - np.atleast_1d(t_burst)[None, :]) ** 2) / width)
    return f / f.max(axis=0, keepdims=True)


def bsd_probabilities(spec: BsdSpec, label: int, other_times) -> np.ndarray:
    """(T, n_inputs) spike probabilities for one sample.

    ``other_times`` gives the burst step of every input channel; entries for
    the class channels are overwritten with the class times.
    """
    times = np.array(other_times, dtype=int)
    times[spec.class_neurons[label]] = spec.class_times[label]
    f = burst_profile(spec.T, times, spec.burst_width)
    return f * (spec.p_max - spec.p_min) + spec.p_min


def bsd_sample(spec: BsdSpec, index: int, seed: int):
    """Draw sample ``index`` from its own counter-based stream."""
    rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(1, index)))
    label = int(rng.integers(spec.n_classes))
    lo, hi = spec.burst_window
    others = rng.integers(lo, hi + 1, size=spec.n_inputs)
    p = bsd_probabilities(spec, label, others)
    x = (rng.random(p.shape) < p).astype(np.uint8)
    return x, label


@dataclass
class BsdDataset:
    x: np.ndarray  # (n, T, N) uint8
    y: np.ndarray  # (n,) int
    spec: BsdSpec

    def split(self, fractions=(0.7, 0.1, 0.2)):
        """Contiguous train/validation/test split."""
        n = len(self.y)
        a = int(round(fractions[0] * n))
        b = a + int(round(fractions[1] * n))
        return (
            BsdDataset(self.x[:a], self.y[:a], self.spec),
            BsdDataset(self.x[a:b], self.y[a:b], self.spec),
            BsdDataset(self.x[b:], self.y[b:], self.spec),
        )

    def mean_rate(self) -> float:
        return float(self.x.mean())


def bsd_generate(spec: BsdSpec, n_samples: int, seed: int | None = None) -> BsdDataset:
    seed = spec.seed if seed is None else seed
    x = np.empty((n_samples, spec.T, spec.n_inputs), dtype=np.uint8)
    y = np.empty(n_samples, dtype=int)
    for i in range(n_samples):
        x[i], y[i] = bsd_sample(spec, i, seed)
    return BsdDataset(x, y, spec)


def expected_burst_spikes(spec: BsdSpec, half_window: int = 5) -> float:
    """Expected spike count within +-half_window steps of a burst centre."""
    d = np.arange(-half_window, half_window + 1)
    f = np.exp(-(d**2) / spec.burst_width)
    return float(np.sum(f * (spec.p_max - spec.p_min) + spec.p_min))


def save_bsd(directory, ds: BsdDataset, meta: dict | None = None):
    m = {"kind": "bsd", "spec": ds.spec.to_dict()}
    m.update(meta or {})
    return save_arrays(directory, {"x": ds.x.astype("|u1"), "y": ds.y.astype("<i4")}, m)


def load_bsd(directory) -> BsdDataset:
    arrays, meta = load_arrays(directory)
    return BsdDataset(arrays["x"], arrays["y"].astype(int), BsdSpec.from_dict(meta["spec"]))


__all__ = [
    "stiffness_matrix", "SpringMassSystem", "spring_mass_generate", "simulate", "TrajectoryDataset",
    "spring_mass_dataset", "eigenfrequencies_uniform", "spring_range_for_bandwidth", "save_trajectories",
    "load_trajectories", "BsdSpec", "make_bsd_spec", "burst_profile", "bsd_probabilities", "bsd_sample",
    "BsdDataset", "bsd_generate", "expected_burst_spikes", "save_bsd", "load_bsd",
]
