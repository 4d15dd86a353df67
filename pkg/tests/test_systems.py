import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from adlif_lab.neuron import InvalidParameterError
from adlif_lab.systems import (
    SpringMassSystem,
    bsd_generate,
    bsd_probabilities,
    eigenfrequencies_uniform,
    expected_burst_spikes,
    load_bsd,
    load_trajectories,
    make_bsd_spec,
    save_bsd,
    save_trajectories,
    simulate,
    spring_mass_dataset,
    spring_mass_generate,
    spring_range_for_bandwidth,
    stiffness_matrix,
)

OMEGA1_N4_S1000 = 19.54395075848548


def uniform_system(n, s, dt=2.5):
    return SpringMassSystem(np.full(n + 1, float(s)), np.ones(n), dt)


def test_stiffness_rule():
    K = stiffness_matrix(np.full(5, 1000.0))
    assert np.all(np.diag(K) == 2000.0)
    assert np.all(np.diag(K, 1) == -1000.0) and np.all(np.diag(K, -1) == -1000.0)
    s = np.array([1.0, 2.0, 3.0, 4.0])
    K = stiffness_matrix(s)
    np.testing.assert_array_equal(K.sum(axis=1), [1.0, 0.0, 4.0])
    np.testing.assert_array_equal(K, K.T)


@given(st.integers(1, 12), st.integers(0, 2**31))
def test_random_stiffness_positive_definite(n, seed):
    sys = spring_mass_generate(n, (500.0, 10000.0), seed)
    np.linalg.cholesky(sys.stiffness)
    assert np.all((sys.springs >= 500.0) & (sys.springs <= 10000.0))


def test_generate_deterministic_and_invalid():
    a, b = spring_mass_generate(4, seed=3), spring_mass_generate(4, seed=3)
    np.testing.assert_array_equal(a.springs, b.springs)
    assert not np.array_equal(a.springs, spring_mass_generate(4, seed=4).springs)
    with pytest.raises(InvalidParameterError):
        spring_mass_generate(4, (0.0, 1.0))
    with pytest.raises(InvalidParameterError):
        spring_mass_generate(4, (10.0, 1.0))


def test_closed_form_frequencies():
    w = eigenfrequencies_uniform(4, 1000.0)
    assert w[0] == pytest.approx(OMEGA1_N4_S1000, rel=1e-14)
    assert w[0] / (2 * math.pi) == pytest.approx(3.110516370757561, rel=1e-14)
    np.testing.assert_allclose(eigenfrequencies_uniform(4, 4000.0), 2 * w, rtol=1e-14)
    for n in range(2, 17):
        num = uniform_system(n, 1000.0).eigenfrequencies()
        np.testing.assert_allclose(np.sort(eigenfrequencies_uniform(n, 1000.0)), num, rtol=1e-10)
    with pytest.raises(InvalidParameterError):
        eigenfrequencies_uniform(3, 0.0)


def test_simulate_trivial_and_scalar():
    sys = uniform_system(3, 700.0)
    assert np.all(simulate(sys, np.zeros(3), np.zeros(3), 50) == 0.0)
    one = uniform_system(1, 800.0)
    x = simulate(one, [0.7], [0.0], 100)[:, 0]
    t = np.arange(100) * 2.5e-3
    np.testing.assert_allclose(x, 0.7 * np.cos(math.sqrt(1600.0) * t), atol=1e-12)
    with pytest.raises(InvalidParameterError):
        simulate(sys, np.zeros(2), np.zeros(3), 5)


def test_energy_and_semigroup():
    sys = spring_mass_generate(4, seed=1)
    x, v = simulate(sys, [1.0, -0.5, 0.3, 0.2], [0.0, 0.1, 0.0, -0.2], 200, return_velocity=True)
    e = sys.energy(x, v)
    assert np.max(np.abs(e - e[0])) / e[0] < 1e-8
    np.testing.assert_allclose(sys.propagator() @ sys.propagator(), sys.propagator(5.0), rtol=1e-10, atol=1e-12)


def test_default_spring_range_band():
    lo = eigenfrequencies_uniform(4, 500.0).min() / (2 * math.pi)
    hi = eigenfrequencies_uniform(4, 10000.0).max() / (2 * math.pi)
    assert abs(lo - 2.0) / 2.0 < 0.15
    assert abs(hi - 32.0) / 32.0 < 0.15


def test_spring_range_for_bandwidth():
    s_lo, s_hi = spring_range_for_bandwidth(2.0, 32.0, 4)
    fmax = eigenfrequencies_uniform(4, s_hi).max() / (2 * math.pi)
    assert abs(fmax - 32.0) / 32.0 < 0.05
    assert spring_range_for_bandwidth(2.0, 300.0, 50)[0] > s_lo
    with pytest.raises(InvalidParameterError, match="infeasible"):
        spring_range_for_bandwidth(10.0, 12.0, 100)
    with pytest.raises(InvalidParameterError):
        spring_range_for_bandwidth(5.0, 2.0, 4)


def test_trajectory_dataset(tmp_path):
    sys = spring_mass_generate(4, seed=0)
    ds = spring_mass_dataset(sys, 16, 50, seed=2)
    assert ds.samples.shape == (16, 50, 4)
    np.testing.assert_array_equal(ds.samples, spring_mass_dataset(sys, 16, 50, seed=2).samples)
    x, y = ds.inputs_targets()
    np.testing.assert_array_equal(x[:, 1:], y[:, :-1])
    # each trajectory is the exact solution from rest
    np.testing.assert_allclose(ds.samples[3], simulate(sys, ds.samples[3, 0], np.zeros(4), 50), atol=1e-12)
    save_trajectories(tmp_path / "sm", ds)
    back = load_trajectories(tmp_path / "sm")
    np.testing.assert_allclose(back.samples, ds.samples, rtol=1e-6, atol=1e-6)
    assert back.dt_sim == 2.5 and back.seed == 2


def test_bsd_spec_distinct_and_in_window():
    spec = make_bsd_spec(20, seed=5)
    sigs = {spec.signature(c) for c in range(20)}
    assert len(sigs) == 20
    assert spec.class_times.min() >= 20 and spec.class_times.max() <= 170
    assert all(len(set(r)) == 3 for r in spec.class_neurons.tolist())
    with pytest.raises(InvalidParameterError):
        make_bsd_spec(2, neurons_per_class=11)


def test_bsd_probabilities():
    spec = make_bsd_spec(10, seed=0)
    p = bsd_probabilities(spec, 3, np.full(10, 100))
    for n, t in zip(spec.class_neurons[3], spec.class_times[3]):
        assert p[t, n] == pytest.approx(0.8)
        far = 0 if t > 100 else 199
        assert p[far, n] == pytest.approx(0.05, abs=1e-12)
    assert p.min() >= 0.05 - 1e-12 and p.max() <= 0.8 + 1e-12


def test_bsd_dataset_determinism_and_io(tmp_path):
    spec = make_bsd_spec(10, seed=0)
    a, b = bsd_generate(spec, 50, seed=1), bsd_generate(spec, 50, seed=1)
    np.testing.assert_array_equal(a.x, b.x)
    np.testing.assert_array_equal(a.y, b.y)
    # per-sample streams: a prefix of a larger set is the smaller set
    np.testing.assert_array_equal(bsd_generate(spec, 80, seed=1).x[:50], a.x)
    tr, va, te = a.split()
    assert (len(tr.y), len(va.y), len(te.y)) == (35, 5, 10)
    save_bsd(tmp_path / "bsd", a)
    back = load_bsd(tmp_path / "bsd")
    np.testing.assert_array_equal(back.x, a.x)
    np.testing.assert_array_equal(back.y, a.y)
    assert back.spec.signature(2) == spec.signature(2)


def test_bsd_burst_spike_count_monte_carlo():
    spec = make_bsd_spec(10, seed=0)
    ds = bsd_generate(spec, 2000, seed=7)
    counts = []
    for x, y in zip(ds.x, ds.y):
        for n, t in zip(spec.class_neurons[y], spec.class_times[y]):
            counts.append(x[t - 5 : t + 6, n].sum())
    assert np.mean(counts) == pytest.approx(expected_burst_spikes(spec), rel=0.03)
    # background rate is close to 0.05 per step away from bursts
    assert 0.05 < ds.mean_rate() < 0.1
