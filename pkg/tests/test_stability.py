import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from adlif_lab.neuron import InvalidParameterError, NeuronParams, build_discrete_system, simulate_adlif
from adlif_lab.stability import (
    a_for_frequency,
    analyze,
    analyze_matrix,
    bhrf_effective_map,
    bounds,
    continuous_eigenvalues,
    continuous_radius,
    ef_max_frequency,
    nyquist_hz,
    spectral_radius,
    sweep_grid,
)

# reference point (tau_u=25, tau_w=60, a=120, dt=1); mpmath, 30 digits
R_SE = 0.972064291361220512
R_EF = 1.011276527176283359
A_MAX_EF = 85.00472212690672
A_MAX_SE = 6000.938885431307
A0_EF = 0.19845660284453606
A1_SE = 0.20415300893591062
A2_SE = 5999.734732422371
F_SE = 45.13031565003594
A_FOR_60HZ = 210.8582131625892
EF_FMAX = 37.66291770316664

REF = NeuronParams(tau_u=25.0, tau_w=60.0, a=120.0)
taus = st.floats(1.0, 500.0)


def test_reference_radius_and_frequency():
    se = analyze(build_discrete_system(REF, "se"))
    ef = analyze(build_discrete_system(REF, "ef"))
    assert se.r == pytest.approx(R_SE, rel=1e-13)
    assert se.r == pytest.approx(math.exp(-85.0 / 3000.0), rel=1e-13)
    assert se.f_hz == pytest.approx(F_SE, rel=1e-12)
    assert se.regime == "underdamped" and se.stable
    assert ef.r == pytest.approx(R_EF, rel=1e-13)
    assert not ef.stable


def test_reference_bounds():
    ef = bounds(REF, "ef")
    se = bounds(REF, "se")
    assert ef.a_max == pytest.approx(A_MAX_EF, rel=1e-13)
    assert ef.a_osc_low == pytest.approx(A0_EF, rel=1e-12)
    assert se.a_max == pytest.approx(A_MAX_SE, rel=1e-13)
    assert se.a_osc_low == pytest.approx(A1_SE, rel=1e-11)
    assert se.a_osc_high == pytest.approx(A2_SE, rel=1e-13)
    assert ef.a_min == se.a_min == -1.0


def test_frequency_inverse_and_ef_ceiling():
    assert a_for_frequency(25, 60, 1.0, 60.0) == pytest.approx(A_FOR_60HZ, rel=1e-13)
    assert ef_max_frequency(25, 60, 1.0) == pytest.approx(EF_FMAX, rel=1e-13)
    with pytest.raises(InvalidParameterError):
        a_for_frequency(25, 60, 1.0, 0.0)
    with pytest.raises(InvalidParameterError):
        a_for_frequency(25, 60, 1.0, 501.0)
    with pytest.raises(InvalidParameterError):
        a_for_frequency(25, 60, 1.0, 10.0, scheme="ef")


def test_nyquist():
    assert nyquist_hz(1.0) == 500.0
    assert nyquist_hz(2.5) == 200.0


@given(taus, taus)
def test_se_radius_constant_across_oscillatory_band(tu, tw):
    b = bounds(NeuronParams(tau_u=tu, tau_w=tw), "se")
    if not b.a_osc_high > b.a_osc_low:
        return
    a = np.linspace(b.a_osc_low, b.a_osc_high, 7)[1:-1]
    r = spectral_radius(tu, tw, a, 1.0, "se")
    assert np.ptp(r) < 1e-12
    assert np.all(r < 1.0)


@given(taus, taus, st.floats(0.0, 1.0))
def test_se_stable_below_bound(tu, tw, frac):
    b = bounds(NeuronParams(tau_u=tu, tau_w=tw), "se")
    a = -1.0 + frac * (b.a_max - (-1.0)) * (1 - 1e-9)
    r = float(spectral_radius(tu, tw, a, 1.0, "se"))
    assert r <= 1.0 + 1e-12


@given(taus, taus)
def test_bounds_are_the_unit_radius_crossing(tu, tw):
    for scheme in ("ef", "se"):
        amax = bounds(NeuronParams(tau_u=tu, tau_w=tw), scheme).a_max
        assert spectral_radius(tu, tw, amax * (1 - 1e-6), 1.0, scheme) < 1.0
        assert spectral_radius(tu, tw, amax * (1 + 1e-6) + 1e-9, 1.0, scheme) > 1.0


@given(taus, taus, st.floats(-0.99, 2000.0), st.sampled_from(["ef", "se", "exact"]))
def test_closed_form_matches_numpy(tu, tw, a, scheme):
    sys = build_discrete_system(NeuronParams(tau_u=tu, tau_w=tw, a=a), scheme)
    ev = analyze(sys)
    lam = np.linalg.eigvals(sys.A_bar)
    assert ev.r == pytest.approx(np.abs(lam).max(), rel=1e-9, abs=1e-12)
    phi = np.abs(np.angle(lam)).max() if np.any(np.abs(lam.imag) > 0) else 0.0
    if ev.regime == "underdamped":
        assert ev.phi == pytest.approx(phi, abs=1e-7)


def test_exact_matches_continuous_radius():
    p = NeuronParams(tau_u=12.0, tau_w=80.0, a=30.0)
    assert analyze(build_discrete_system(p, "exact")).r == pytest.approx(
        float(continuous_radius(12.0, 80.0, 30.0)), rel=1e-12
    )
    ce = continuous_eigenvalues(p)
    assert ce.stable and ce.regime == "underdamped"


def test_regimes():
    A = np.array([[0.5, 0.0], [0.0, 0.3]])
    ev = analyze_matrix(A)
    assert ev.regime == "overdamped" and ev.f_hz == 0.0 and ev.r == pytest.approx(0.5)
    ev = analyze_matrix(np.array([[0.5, 1.0], [0.0, 0.5]]))
    assert ev.regime == "critically_damped" and ev.r == pytest.approx(0.5)
    ev = analyze_matrix(np.array([[-0.5, 1.0], [0.0, -0.5]]))
    assert ev.phi == pytest.approx(math.pi)
    assert ev.f_hz == pytest.approx(nyquist_hz(1.0))
    rot = 0.1
    ev = analyze_matrix(0.9 * np.array([[math.cos(rot), -math.sin(rot)], [math.sin(rot), math.cos(rot)]]), dt=2.0)
    assert ev.r == pytest.approx(0.9) and ev.phi == pytest.approx(rot)
    assert ev.f_hz == pytest.approx(rot * 1000 / (2 * math.pi * 2.0))
    assert ev.r_per_ms == pytest.approx(0.9**0.5)


def test_se_simulated_oscillation_matches_frequency():
    p = NeuronParams(tau_u=200.0, tau_w=300.0, a=a_for_frequency(200, 300, 1.0, 40.0))
    I = np.zeros(4096)
    I[0] = 1.0
    u, _, _ = simulate_adlif(p, I, "se")
    spec = np.abs(np.fft.rfft(u))
    f = np.fft.rfftfreq(len(u), 1e-3)
    assert abs(f[np.argmax(spec)] - 40.0) <= f[1]


def test_sweep_grid_shape_and_ranges():
    rows = sweep_grid((5, 25), (60, 300), (0, 120), "se", (3, 4, 5))
    assert len(rows) == 60
    assert {r["tau_u"] for r in rows} == {5.0, 15.0, 25.0}
    assert all(r["stable"] for r in rows)
    cont = sweep_grid(scheme="continuous", n_points=3)
    assert all(r["stable"] for r in cont)
    with pytest.raises(InvalidParameterError):
        sweep_grid((5, 1), (60, 300), (0, 120))
    with pytest.raises(InvalidParameterError):
        sweep_grid(n_points=(0, 2, 2))


def test_sweep_grid_matches_scalar_analysis():
    for row in sweep_grid(scheme="ef", n_points=4):
        ev = analyze(build_discrete_system(NeuronParams(tau_u=row["tau_u"], tau_w=row["tau_w"], a=row["a"]), "ef"))
        assert row["r"] == pytest.approx(ev.r, rel=1e-14)
        assert row["f_hz"] == pytest.approx(ev.f_hz, rel=1e-12, abs=1e-12)
        assert row["stable"] == ev.stable


def test_bhrf_map_schemes():
    om = np.linspace(1, 300, 12)
    dm = np.linspace(0, 50, 6)
    se = bhrf_effective_map(om, dm, scheme="se")
    ef = bhrf_effective_map(om, dm, scheme="ef")
    assert not any(r["unstable"] for r in se)
    for r in se:
        if r["regime"] == "underdamped":
            assert r["b_eff"] == pytest.approx(r["damping"], abs=1e-9)
    assert any(r["unstable"] for r in ef)
