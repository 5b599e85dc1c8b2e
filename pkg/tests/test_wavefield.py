import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.integrate import quad

from enclosure.geometry import REFERENCE_GEOMETRY
from enclosure.oracles import spherical_mean_wave, trapezoid_w0, volume_potential_v0
from enclosure.wavefield import (F0_eval, WaveDomainError, WaveField, flux_on_boundary,
                                 psi_B, psi_norm_sq, v0_bracket_scaled, v0_closed, v0_closed_ds,
                                 w0_eval, wave_dt, wave_eval)

SRC = REFERENCE_GEOMETRY.source


def probe(lam=1.0, T=2.0, amp=1.0):
    return WaveField(SRC, lam, T, amp)


def test_psi_examples():
    np.testing.assert_allclose(psi_B([0.0, 0.1, 0.25], 0.2), [0.2, 0.1, 0.0], atol=1e-16)


def test_psi_norm_examples():
    assert psi_norm_sq(1.0) == pytest.approx(0.418879, abs=1e-6)
    assert psi_norm_sq(0.2) == pytest.approx(1.34041e-4, rel=1e-5)
    assert psi_norm_sq(0.0) == 0.0
    ref = 4 * np.pi * quad(lambda r: r * r * (0.2 - r) ** 2, 0, 0.2)[0]
    assert psi_norm_sq(0.2) == pytest.approx(ref, rel=1e-13)


def test_wave_examples():
    w = probe()
    assert wave_eval(w, 1.3, 1.0).v == 0.0
    assert wave_eval(w, 1.3, 1.6).v == 0.0
    v = wave_eval(w, 1.3, 1.3).v
    assert v == pytest.approx(1.3 / (2 * 1.3 * 1.3) * 0.2**3 / 6, rel=1e-14)
    assert v == pytest.approx(5.1282e-4, rel=1e-4)
    assert v == pytest.approx(spherical_mean_wave(0.2, 1.0, 1.3, 1.3), rel=1e-12)


def test_wave_domain_errors():
    w = probe()
    with pytest.raises(WaveDomainError):
        wave_eval(w, 0.1, 1.0)
    with pytest.raises(WaveDomainError):
        wave_eval(w, 1.0, -0.1)


@settings(max_examples=50)
@given(st.floats(0.2, 3.0), st.floats(0.0, 4.0), st.floats(0.25, 4.0))
def test_wave_matches_spherical_mean(s, t, lam):
    w = probe(lam)
    ref = spherical_mean_wave(0.2, lam, s, t)
    assert float(wave_eval(w, s, t).v) == pytest.approx(ref, rel=1e-10, abs=1e-18)


@given(st.floats(0.2, 3.0), st.floats(0.0, 4.0), st.floats(0.25, 4.0), st.floats(0.1, 10.0))
def test_scaling_identity(s, t, lam, amp):
    a = wave_eval(probe(lam, amp=amp), s, t)
    b = wave_eval(probe(1.0, amp=amp), s, t / lam)
    assert float(a.v) == pytest.approx(lam * float(b.v), rel=1e-12, abs=1e-300)


def test_causal_window_and_continuity():
    w = probe(1.7)
    s = 1.1
    t = np.linspace(0.0, 3.0, 3001)
    v = wave_eval(w, s, t).v
    assert np.all(v[t < 1.7 * (s - 0.2)] == 0) and np.all(v[t > 1.7 * (s + 0.2)] == 0)
    assert np.abs(np.diff(v)).max() < 1e-5


def test_ds_and_dt_against_finite_differences():
    w = probe(1.3)
    s = np.array([0.9, 1.05, 1.37])
    t = np.array([1.0, 1.5, 1.9])
    h = 1e-6
    fd_s = (wave_eval(w, s + h, t).v - wave_eval(w, s - h, t).v) / (2 * h)
    fd_t = (wave_eval(w, s, t + h).v - wave_eval(w, s, t - h).v) / (2 * h)
    np.testing.assert_allclose(wave_eval(w, s, t).dv_ds, fd_s, rtol=1e-7)
    np.testing.assert_allclose(wave_dt(w, s, t), fd_t, rtol=1e-7)


def test_flux_examples():
    w = probe()
    g = REFERENCE_GEOMETRY
    assert flux_on_boundary(w, g, 1.0, 0.0) == 0.0
    mu = np.linspace(-1, 1, 41)
    s = np.sqrt(1 + 1.5**2 - 3 * mu)
    t_early = 0.999 * (s - 0.2)
    assert np.all(flux_on_boundary(w, g, mu, t_early) == 0)
    t = 1.5 - 1.0
    f = float(flux_on_boundary(w, g, 1.0, t))
    h = 1e-6
    fd = (wave_eval(w, 0.5 + h, t).v - wave_eval(w, 0.5 - h, t).v) / (2 * h)
    # at mu = 1 the outward normal points at the source: d/dnu = -d/ds
    assert f != 0 and f == pytest.approx(-float(fd), rel=1e-7)


def test_energy_bound():
    bound = 2 * np.sqrt(psi_norm_sq(0.2)) + 1e-10
    for lam, T in [(0.5, 1.0), (1.0, 1.3), (3.0, 2.0), (0.2, 0.3)]:
        w = probe(lam, T)
        rho = T / lam
        val = quad(lambda s: 4 * np.pi * s * s * float(wave_dt(w, s, T)) ** 2,
                   rho - 0.2, rho + 0.2, points=[rho], epsabs=0, epsrel=1e-12)[0]
        assert np.sqrt(val) <= bound


def test_w0_after_horizon_vanishes():
    w = probe(1.0, T=0.5)
    v, dv = w0_eval(w, 0.8, 5.0)
    assert v[0] == 0.0 and dv[0] == 0.0


def test_w0_small_tau_against_trapezoid():
    w = probe(1.2, T=3.0)
    s = 1.1
    lo, hi = 1.2 * (s - 0.2), 1.2 * (s + 0.2)
    ref = trapezoid_w0(lambda t: wave_eval(w, s, t).v, lo, hi, 1e-8)
    assert w0_eval(w, s, 1e-8)[0][0] == pytest.approx(ref, rel=1e-9)


def test_w0_equals_v0_when_window_inside_horizon():
    w = probe(1.0, T=2.0)
    assert w0_eval(w, 1.3, 20.0)[0][0] == pytest.approx(float(v0_closed(w, 1.3, 20.0)), rel=1e-11)


def test_w0_gradient_against_finite_differences():
    w = probe(1.0, T=1.0)
    s = np.array([0.7, 0.95, 1.1])
    h = 1e-5
    _, dv = w0_eval(w, s, 7.0)
    fd = (w0_eval(w, s + h, 7.0)[0] - w0_eval(w, s - h, 7.0)[0]) / (2 * h)
    np.testing.assert_allclose(dv, fd, rtol=1e-7)


def test_v0_small_argument_limit():
    lam, s = 1.0, 1.2
    tau = 1e-3 / (lam * 0.2)
    w = probe(lam)
    limit = lam**2 * 0.2**4 * np.exp(-tau * lam * s) / (12 * s)
    assert float(v0_closed(w, s, tau)) / limit == pytest.approx(1.0, abs=1e-6)


@pytest.mark.parametrize("x", [1e-4, 0.3, 0.999, 1.0, 1.5, 20.0, 400.0])
def test_v0_bracket_against_direct(x):
    direct = (-2 * np.cosh(x) + x * np.sinh(x) + 2) * np.exp(-x)
    assert float(v0_bracket_scaled(x)) == pytest.approx(direct, rel=1e-7 if x < 1e-2 else 1e-12)


def test_v0_against_volume_potential():
    w = probe(1.0)
    assert float(v0_closed(w, 1.5, 10.0)) == pytest.approx(
        volume_potential_v0(0.2, 1.0, 1.5, 10.0), rel=1e-9)


def test_v0_decay_and_guard():
    w = probe(1.0)
    assert float(v0_closed(w, 200.0, 10.0)) == 0.0 or float(v0_closed(w, 200.0, 10.0)) < 1e-300
    with pytest.raises(OverflowError):
        v0_closed(w, 1.0, 5000.0)
    h = 1e-6
    fd = (v0_closed(w, 1.2 + h, 3.0) - v0_closed(w, 1.2 - h, 3.0)) / (2 * h)
    assert float(v0_closed_ds(w, 1.2, 3.0)) == pytest.approx(float(fd), rel=1e-7)


def test_F0_examples():
    w = WaveField(SRC, 4.0, 5.0)
    assert F0_eval(w, 1.3, 3.0, T=6.5) == 0.0
    assert F0_eval(w, 1.3, 3.0, T=4.0) == 0.0
    h = 1e-6
    fd = (wave_eval(w, 1.3, 5.0 + h).v - wave_eval(w, 1.3, 5.0 - h).v) / (2 * h)
    ref = fd + 3.0 * wave_eval(w, 1.3, 5.0).v
    val = float(F0_eval(w, 1.3, 3.0))
    assert val != 0 and val == pytest.approx(float(ref), rel=1e-7)


def test_amplitude_linearity():
    a = wave_eval(probe(amp=2.5), 1.1, 1.0)
    b = wave_eval(probe(), 1.1, 1.0)
    assert float(a.v) == pytest.approx(2.5 * float(b.v), rel=1e-15)
