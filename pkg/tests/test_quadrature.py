import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.integrate import quad

from enclosure.quadrature import (QuadratureError, adaptive_panels, exp_moments,
                                  gauss_legendre, laplace_weights, panel_rule, refine_edges)


@given(st.integers(1, 40))
def test_gauss_weights_sum_to_two(n):
    _, w = gauss_legendre(n)
    assert abs(w.sum() - 2.0) < 1e-14


@given(st.integers(1, 20), st.integers(0, 39))
def test_gauss_exact_for_low_degree(n, k):
    if k > 2 * n - 1:
        return
    x, w = gauss_legendre(n)
    exact = 0.0 if k % 2 else 2.0 / (k + 1)
    assert abs(w @ x**k - exact) < 1e-13


def test_panel_rule_drops_empty_panels():
    x, w = panel_rule([0.0, 0.5, 0.5, 1.0], 4)
    assert x.size == 8
    assert abs(w.sum() - 1.0) < 1e-15


def test_refine_edges_limits_width():
    e = refine_edges([0.0, 1.0, 3.0], 0.3)
    assert np.diff(e).max() <= 0.3 + 1e-15
    assert {0.0, 1.0, 3.0} <= set(e.tolist())


def test_adaptive_panels_many_intervals_and_components():
    lo = np.array([0.0, 1.0, 2.0])
    hi = np.array([1.0, 3.0, 2.0])
    rates = np.array([1.0, 40.0, 3.0])

    def f(t, idx):
        k = rates[idx, None]
        return np.stack([np.exp(-k * t), t * np.exp(-k * t)], axis=-1)

    out = adaptive_panels(f, lo, hi)
    for i in range(3):
        for j, g in enumerate([lambda t: np.exp(-rates[i] * t),
                               lambda t: t * np.exp(-rates[i] * t)]):
            ref = quad(g, lo[i], hi[i], epsabs=0, epsrel=1e-13)[0] if hi[i] > lo[i] else 0.0
            assert out[i, j] == pytest.approx(ref, rel=1e-12, abs=1e-300)


def test_adaptive_panels_resolves_dyadic_kink():
    # bisection lands on the kink; generic kinks are split by the callers
    out = adaptive_panels(lambda t, idx: np.abs(t - 0.25), [0.0], [1.0], tol=1e-12)
    assert out[0, 0] == pytest.approx(0.5 * (0.0625 + 0.5625), rel=1e-12)


def test_adaptive_panels_raises_on_failure():
    with pytest.raises(QuadratureError):
        adaptive_panels(lambda t, idx: 1.0 / np.sqrt(np.abs(t - 1 / 3)), [0.0], [1.0],
                        tol=1e-14, max_depth=4)


@settings(max_examples=60, deadline=None)
@given(st.floats(0.0, 500.0), st.floats(1e-4, 3.0))
def test_exp_moments_against_quad(rate, width):
    m = exp_moments(rate, width, 2)
    for k in range(3):
        ref = quad(lambda x: x**k * np.exp(-rate * x), 0, width, epsabs=0, epsrel=1e-13,
                   limit=200)[0]
        assert m[k] == pytest.approx(ref, rel=1e-10, abs=1e-300)


@pytest.mark.parametrize("tau", [0.5, 5.0, 80.0])
def test_laplace_weights_constant_history(tau):
    t = np.linspace(0.0, 1.3, 401)
    T = t[-1]
    assert laplace_weights(t, tau) @ np.ones_like(t) == pytest.approx(
        (1 - np.exp(-tau * T)) / tau, abs=1e-10)


@pytest.mark.parametrize("tau", [0.5, 5.0, 80.0])
def test_laplace_weights_linear_history(tau):
    t = np.concatenate([[0.0], np.linspace(0.2, 1.0, 301), 1.0 + np.cumsum(np.geomspace(1e-3, 0.05, 20))])
    T = t[-1]
    exact = (1 - np.exp(-tau * T) * (1 + tau * T)) / tau**2
    assert laplace_weights(t, tau) @ t == pytest.approx(exact, abs=1e-9)


@settings(max_examples=40, deadline=None)
@given(st.integers(3, 60), st.floats(0.0, 200.0), st.floats(0.0, 1.0))
def test_laplace_weights_exact_for_quadratics(n, tau, grade):
    # smoothly graded grids keep every quadratic panel; the linear fallback
    # only triggers where adjacent steps differ by more than a factor two
    x = np.linspace(0.0, 1.0, n)
    t = (x + grade * x * x) / (1.0 + grade)
    g = 1.0 - 2.0 * t + 0.7 * t * t
    ref = quad(lambda x: np.exp(-tau * x) * (1 - 2 * x + 0.7 * x * x), 0, 1, epsabs=1e-15,
               epsrel=1e-13, limit=200)[0]
    assert laplace_weights(t, tau) @ g == pytest.approx(ref, rel=1e-9, abs=1e-13)


def test_laplace_weights_do_not_extrapolate_across_step_jumps():
    # a lone long first interval next to fine steps must not borrow the fine node
    t = np.concatenate([[0.0], np.linspace(0.3, 1.0, 3501)])
    g = np.where(t < 0.3, 0.0, np.sin(5 * (t - 0.3)))
    ref = quad(lambda x: np.exp(-20 * x) * np.sin(5 * (x - 0.3)), 0.3, 1.0, epsabs=0,
               epsrel=1e-13)[0]
    assert laplace_weights(t, 20.0) @ g == pytest.approx(ref, rel=1e-9)
