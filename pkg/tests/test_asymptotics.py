import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from enclosure.asymptotics import (Behaviour, FitError, LambdaSchedule, NumericsConfig, RateFit,
                                   SweepSeries, XAxis, default_tau_grid, estimate_distance,
                                   expected_propagation_rate, fit_rate, geometric_grid,
                                   laplace_correction_slope, propagation_rate_check,
                                   ratio_bounds_check, run_sweep, sign_onset, threshold_classify)
from enclosure.geometry import REFERENCE_GEOMETRY
from enclosure.indicator import IndicatorSample
from enclosure.wavefield import WaveField

G = REFERENCE_GEOMETRY


def series(taus, values, schedule=LambdaSchedule.fixed(1.0), T=1.0, w0_sq=None, flags=None):
    taus = np.asarray(taus, dtype=float)
    w0_sq = np.ones_like(taus) if w0_sq is None else w0_sq
    flags = [False] * taus.size if flags is None else flags
    samples = tuple(IndicatorSample(float(t), schedule.lam(t), float(v), 0.0, 0.0, 0.0, 0.0,
                                    0.0, float(q), 0.0, floor_flag=f)
                    for t, v, q, f in zip(taus, values, w0_sq, flags))
    return SweepSeries(schedule, samples, G, T)


def test_schedules():
    assert LambdaSchedule.fixed(2.0).lam(100.0) == 2.0
    assert LambdaSchedule.inv_sqrt_tau().lam(25.0) == pytest.approx(0.2)
    assert LambdaSchedule.scaled(4.0).lam(16.0) == pytest.approx(0.5)
    assert LambdaSchedule.inv_sqrt_tau().c == 1.0
    with pytest.raises(ValueError):
        LambdaSchedule.fixed(-1.0)
    with pytest.raises(ValueError):
        LambdaSchedule.fixed(1.0).c


def test_numerics_validation():
    with pytest.raises(ValueError):
        NumericsConfig(route="spectral")
    with pytest.raises(ValueError):
        NumericsConfig(quad_tol=1e-3)
    assert NumericsConfig().route_for(LambdaSchedule.scaled(4.0)) == "laplace"
    assert NumericsConfig().route_for(LambdaSchedule.fixed(1.0)) == "time"


def test_default_grids_respect_floor_guard():
    np.testing.assert_allclose(default_tau_grid(LambdaSchedule.fixed(1.0), G)[[0, -1]], [10, 50])
    for c in (0.25, 1.0, 4.0):
        taus = default_tau_grid(LambdaSchedule.scaled(c), G)
        assert taus.size == 16
        assert 2 * np.sqrt(c * taus.max()) * G.dist_omega == pytest.approx(32.0)
    with pytest.raises(ValueError):
        geometric_grid(5.0, 1.0, 4)


def test_series_must_be_ascending():
    with pytest.raises(ValueError):
        series([2.0, 1.0], [1.0, 1.0])


def test_fit_tau_axis_recovers_synthetic_model():
    taus = np.geomspace(10, 50, 16)
    f = fit_rate(series(taus, np.exp(-0.6 * taus + 3 * np.log(taus) + 1)), XAxis.TAU)
    assert f.slope == pytest.approx(-0.6, abs=1e-10)
    assert f.log_correction_coeff == pytest.approx(3.0, abs=1e-9)
    assert f.intercept == pytest.approx(1.0, abs=1e-8)
    assert f.window[0] >= taus.min() and f.window[1] == taus.max()


def test_fit_sqrt_axis_recovers_synthetic_model():
    taus = np.geomspace(25, 225, 16)
    f = fit_rate(series(taus, np.exp(-1.8 * np.sqrt(taus) + 2), LambdaSchedule.inv_sqrt_tau()),
                 "sqrt_tau")
    assert f.slope == pytest.approx(-1.8, abs=1e-10)
    assert f.residual_rms < 1e-10


@settings(max_examples=40)
@given(st.floats(-5, -0.01), st.floats(-4, 4), st.floats(-10, 10), st.booleans())
def test_fit_exact_on_model_data(slope, k, b, negative):
    taus = np.linspace(5, 80, 12)
    vals = np.exp(slope * taus + k * np.log(taus) + b) * (-1 if negative else 1)
    f = fit_rate(series(taus, vals), XAxis.TAU)
    assert f.slope == pytest.approx(slope, abs=1e-10)


def test_fit_errors():
    taus = np.geomspace(10, 50, 16)
    vals = np.exp(-0.6 * taus)
    vals[-2] *= -1
    with pytest.raises(FitError, match="tau="):
        fit_rate(series(taus, vals), XAxis.TAU)
    flags = [True] * 14 + [False] * 2
    with pytest.raises(FitError):
        fit_rate(series(taus, np.exp(-0.6 * taus), flags=flags), XAxis.TAU)


def test_estimate_distance_examples():
    fit = lambda s: RateFit(s, 0.0, 0.0, XAxis.TAU, (1, 2), 0.0)
    assert estimate_distance(fit(-0.6), LambdaSchedule.fixed(1.0)) == pytest.approx(0.3)
    assert estimate_distance(fit(-1.8), LambdaSchedule.inv_sqrt_tau()) == pytest.approx(0.9)
    assert estimate_distance(fit(-1.2), LambdaSchedule.scaled(4.0)) == pytest.approx(0.3)
    with pytest.raises(FitError, match="no exponential decay"):
        estimate_distance(fit(0.1), LambdaSchedule.fixed(1.0))


def test_threshold_synthetic():
    taus = np.geomspace(10, 50, 16)
    s = series(taus, np.exp(-0.4 * taus))
    assert threshold_classify(s, XAxis.TAU, T=1.0) is Behaviour.DIVERGES
    assert threshold_classify(s, XAxis.TAU, T=0.2) is Behaviour.VANISHES
    assert threshold_classify(s, XAxis.TAU, T=0.4) is Behaviour.BORDERLINE
    with pytest.raises(FitError):
        threshold_classify(series(taus[:3], np.ones(3)), XAxis.TAU)


def test_threshold_robust_to_one_outlier():
    taus = np.geomspace(10, 50, 16)
    vals = np.exp(-0.4 * taus)
    vals[5] *= 1e3
    assert threshold_classify(series(taus, vals), XAxis.TAU, T=1.0) is Behaviour.DIVERGES


@pytest.mark.parametrize("c, bounds", [(1.0, (0.0, 0.0)), (4.0, (3.0, 12.0)),
                                       (0.25, (-0.75, -0.1875))])
def test_ratio_bounds(c, bounds):
    taus = np.array([100.0, 200.0])
    sched = LambdaSchedule.scaled(c)
    lo, hi = sorted(bounds)
    mid = 0.5 * (lo + hi)
    chk = ratio_bounds_check(series(taus, mid * taus, sched))
    assert (chk.lower, chk.upper) == pytest.approx(bounds)
    assert chk.passed and chk.ratio == pytest.approx(mid)
    m = 0.25 * max(abs(c - 1), 0.05)
    assert not ratio_bounds_check(series(taus, (hi + 1.01 * m) * taus, sched)).passed
    assert ratio_bounds_check(series(taus, (lo - 0.99 * m) * taus, sched)).passed


def test_sign_onset():
    taus = np.arange(1.0, 7.0)
    assert sign_onset(series(taus, [1, -1, -1, 1, 1, 1])) == 4.0
    assert sign_onset(series(taus, np.ones(6))) == 1.0


def test_run_sweep_grid_errors_and_single_point():
    with pytest.raises(ValueError):
        run_sweep(G, 1.0, LambdaSchedule.scaled(4.0), [])
    with pytest.raises(ValueError):
        run_sweep(G, 1.0, LambdaSchedule.scaled(4.0), [30.0, 20.0])
    s = run_sweep(G, 1.0, LambdaSchedule.scaled(4.0), [400.0])
    assert len(s.samples) == 1 and s.samples[0].route == "laplace"
    assert s.samples[0].indicator > 0


def test_run_sweep_parallel_matches_serial():
    taus = [300.0, 400.0, 500.0]
    a = run_sweep(G, 1.0, LambdaSchedule.scaled(0.25), taus)
    b = run_sweep(G, 1.0, LambdaSchedule.scaled(0.25), taus, jobs=2)
    assert repr(a.samples) == repr(b.samples)  # nan fields defeat ==


def test_run_sweep_records_failures(monkeypatch):
    import enclosure.asymptotics as asym

    real = asym._sample_laplace

    def flaky(args):
        if args[3] > 450.0:
            raise ArithmeticError("injected")
        return real(args)

    monkeypatch.setattr(asym, "_sample_laplace", flaky)
    s = run_sweep(G, 1.0, LambdaSchedule.scaled(4.0), [300.0, 400.0, 500.0])
    assert len(s.samples) == 2 and s.failures[0][0] == 500.0
    with pytest.raises(RuntimeError, match="2 of 3"):
        run_sweep(G, 1.0, LambdaSchedule.scaled(4.0), [400.0, 500.0, 600.0])


def test_propagation_rate_scales_with_lambda():
    taus = np.geomspace(20, 100, 8)
    for lam in (1.0, 2.0):
        w = WaveField(G.source, lam, 4.0)
        slope = propagation_rate_check(w, G, "Omega", taus)
        assert slope == pytest.approx(expected_propagation_rate(w, G, "Omega"), rel=0.1)
    with pytest.raises(ValueError):
        propagation_rate_check(w, G, "B", taus)


def test_laplace_correction_slope_tracks_horizon():
    w = WaveField(G.source, 1.0, 1.0)
    slope = laplace_correction_slope(w, 1.0, np.geomspace(5, 40, 12))
    assert slope == pytest.approx(-1.0, rel=0.15)
