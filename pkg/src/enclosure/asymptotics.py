"""Tau sweeps under the three lambda schedules, rate fits and the
classification rules built on them."""

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace
from enum import Enum

import numpy as np

from .geometry import ProbeGeometry, ball_distance, Distance, ball_rule
from .heat_solver import RadialGrid, TimeGrid, mode_flux_history, solve_all_modes
from .indicator import (choose_max_degree, decomposition_terms, indicator_symmetric,
                        laplace_route_fields, project_shell_modes, time_route_fields,
                        w0_kinks, first_representation_scale)
from .wavefield import WaveField, v0_closed, w0_eval


class ScheduleKind(Enum):
    FIXED = "fixed"
    INV_SQRT_TAU = "inv_sqrt_tau"
    SCALED_INV_SQRT_TAU = "scaled_inv_sqrt_tau"


@dataclass(frozen=True)
class LambdaSchedule:
    """``lambda(tau)``: a constant, ``1/sqrt(tau)`` or ``sqrt(c/tau)``.

    ``value`` is the constant lambda for ``FIXED`` and ``c`` for
    ``SCALED_INV_SQRT_TAU``; it is ignored for ``INV_SQRT_TAU``.
    """

    kind: ScheduleKind
    value: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "kind", ScheduleKind(self.kind))
        if not self.value > 0:
            raise ValueError(f"schedule parameter must be positive, got {self.value}")

    @classmethod
    def fixed(cls, lam):
        return cls(ScheduleKind.FIXED, lam)

    @classmethod
    def inv_sqrt_tau(cls):
        return cls(ScheduleKind.INV_SQRT_TAU, 1.0)

    @classmethod
    def scaled(cls, c):
        return cls(ScheduleKind.SCALED_INV_SQRT_TAU, c)

    @property
    def c(self):
        """``lambda^2 tau`` for the square-root schedules."""
        if self.kind is ScheduleKind.FIXED:
            raise ValueError("a fixed schedule has no c")
        return 1.0 if self.kind is ScheduleKind.INV_SQRT_TAU else self.value

    @property
    def tau_dependent(self):
        return self.kind is not ScheduleKind.FIXED

    def lam(self, tau):
        if self.kind is ScheduleKind.FIXED:
            return self.value
        return math.sqrt(self.c / tau)

    def rate_factor(self):
        """``-slope / distance`` predicted for the matching axis."""
        if self.kind is ScheduleKind.FIXED:
            return 2.0 * self.value
        return 2.0 * math.sqrt(self.c)

    def natural_axis(self):
        return XAxis.TAU if self.kind is ScheduleKind.FIXED else XAxis.SQRT_TAU


class XAxis(Enum):
    TAU = "tau"
    SQRT_TAU = "sqrt_tau"

    def of(self, tau):
        tau = np.asarray(tau, dtype=float)
        return tau if self is XAxis.TAU else np.sqrt(tau)


class Behaviour(Enum):
    DIVERGES = "Diverges"
    VANISHES = "Vanishes"
    BORDERLINE = "Borderline"


@dataclass(frozen=True)
class NumericsConfig:
    radial_points: int = 801
    dt_max: float = 2.5e-4
    max_degree: int = 120
    quad_tol: float = 1e-12
    fine_steps: int = 200
    alpha: float = 0.05
    route: str = "auto"

    def __post_init__(self):
        if self.route not in ("auto", "time", "laplace"):
            raise ValueError(f"route must be auto, time or laplace, got {self.route!r}")
        if not 1e-14 <= self.quad_tol <= 1e-6:
            raise ValueError("quad_tol must lie in [1e-14, 1e-6]")
        if self.radial_points < 33:
            raise ValueError("radial_points must be at least 33")

    def route_for(self, schedule):
        if self.route != "auto":
            return self.route
        return "laplace" if schedule.tau_dependent else "time"


@dataclass(frozen=True)
class SweepSeries:
    schedule: LambdaSchedule
    samples: tuple
    geometry: ProbeGeometry
    T_final: float
    failures: tuple = ()

    def __post_init__(self):
        taus = [s.tau for s in self.samples]
        if any(b <= a for a, b in zip(taus[:-1], taus[1:])):
            raise ValueError("samples must have strictly increasing tau")

    @property
    def taus(self):
        return np.array([s.tau for s in self.samples])

    @property
    def indicators(self):
        return np.array([s.indicator for s in self.samples])

    def usable(self):
        return [s for s in self.samples if not s.floor_flag and s.indicator != 0]


@dataclass(frozen=True)
class RateFit:
    slope: float
    intercept: float
    log_correction_coeff: float
    x_axis: XAxis
    window: tuple
    residual_rms: float
    n_samples: int = 0


class FitError(ValueError):
    """Too few usable samples or a sign change inside the fit window."""


# --- tau grids ---------------------------------------------------------------

def geometric_grid(lo, hi, n):
    if not 0 < lo < hi:
        raise ValueError("need 0 < tau_min < tau_max")
    return np.geomspace(lo, hi, n)


def default_tau_grid(schedule, geometry, n=16, floor_exponent=32.0):
    """Sixteen geometric points per schedule.

    Fixed lambda uses [10, 50]. The square-root schedules take
    ``tau_max`` from the floor guard ``2 sqrt(c tau_max) dist(Omega, B) =
    floor_exponent`` and ``tau_min = tau_max / 9`` (a factor 3 in
    ``sqrt(tau)``), which keeps the indicator inside double precision
    while putting the window where the fitted slope has settled.
    """
    if schedule.kind is ScheduleKind.FIXED:
        return geometric_grid(10.0, 50.0, n)
    d = geometry.dist_omega
    tau_max = (floor_exponent / (2 * d)) ** 2 / schedule.c
    return geometric_grid(tau_max / 9.0, tau_max, n)


# --- sample evaluation -------------------------------------------------------

def _time_sweep(geometry, T, lam, taus, num, flux_scale=1.0):
    """One heat solve for a fixed lambda, every tau read off its transforms."""
    taus = np.asarray(taus, dtype=float)
    w = WaveField(geometry.source, lam, T)
    L = min(num.max_degree, max(choose_max_degree(w, geometry, t, cap=num.max_degree,
                                                  quad_tol=num.quad_tol)
                                for t in (taus.min(), taus.max())))
    tg = TimeGrid.for_probe(w, geometry, num.dt_max, num.fine_steps, taus.max(), num.alpha)
    flux = flux_scale * mode_flux_history(w, geometry, L, tg.t_nodes)
    grid = RadialGrid.uniform(geometry.r_cavity, geometry.r_omega, num.radial_points)
    sol = solve_all_modes(grid, tg.t_nodes, flux, taus)
    return w, sol


def _sample_time(geometry, T, lam, taus, num):
    w, sol = _time_sweep(geometry, T, lam, taus, num)
    out = []
    for tau in taus:
        f = time_route_fields(sol, w, geometry, tau, num.quad_tol)
        s = decomposition_terms(f, w, geometry, num.quad_tol)
        out.append(replace(s, first_rep_residual=s.first_rep_residual
                           / max(first_representation_scale(f, geometry), 1e-300)))
    return out


def _sample_laplace(args):
    geometry, T, lam, tau, num = args
    w = WaveField(geometry.source, lam, T)
    L = choose_max_degree(w, geometry, tau, cap=num.max_degree, quad_tol=num.quad_tol)
    f = laplace_route_fields(w, geometry, tau, L, num.quad_tol)
    return decomposition_terms(f, w, geometry, num.quad_tol)


def _sample_time_single(args):
    geometry, T, lam, tau, num = args
    return _sample_time(geometry, T, lam, [tau], num)[0]


def run_sweep(geometry, T_final, schedule, taus, numerics=NumericsConfig(), jobs=1):
    """Indicator samples along ``taus`` under ``schedule``.

    Fixed lambda needs a single heat solve for the whole grid. Otherwise
    every tau is an independent job; jobs run in a process pool and are
    reduced in tau order. Failed samples are recorded and skipped unless
    more than half of the grid fails.
    """
    taus = np.asarray(taus, dtype=float)
    if taus.size == 0:
        raise ValueError("empty tau grid")
    if np.any(np.diff(taus) <= 0):
        raise ValueError("tau grid must be strictly increasing")
    route = numerics.route_for(schedule)
    if not schedule.tau_dependent and route == "time":
        samples = _sample_time(geometry, T_final, schedule.value, taus, numerics)
        return SweepSeries(schedule, tuple(samples), geometry, T_final)
    worker = _sample_laplace if route == "laplace" else _sample_time_single
    args = [(geometry, T_final, schedule.lam(t), float(t), numerics) for t in taus]
    results = []
    if jobs > 1 and len(args) > 1:
        with ProcessPoolExecutor(jobs) as pool:
            futures = [pool.submit(worker, a) for a in args]
            for fut in futures:
                try:
                    results.append(fut.result())
                except (ArithmeticError, ValueError, RuntimeError) as exc:
                    results.append(exc)
    else:
        for a in args:
            try:
                results.append(worker(a))
            except (ArithmeticError, ValueError, RuntimeError) as exc:
                results.append(exc)
    samples = tuple(r for r in results if not isinstance(r, Exception))
    failures = tuple((float(t), repr(r)) for t, r in zip(taus, results)
                     if isinstance(r, Exception))
    if len(failures) * 2 > len(taus):
        raise RuntimeError(f"{len(failures)} of {len(taus)} sweep samples failed: {failures[:3]}")
    return SweepSeries(schedule, samples, geometry, T_final, failures)


# --- fits --------------------------------------------------------------------

def _window(series, window_fraction):
    taus = series.taus
    if taus.size == 0:
        raise FitError("empty series")
    lo = taus.max() - window_fraction * (taus.max() - taus.min())
    return [s for s in series.usable() if s.tau >= lo - 1e-12 * abs(lo)]


def fit_rate(series, x_axis, window_fraction=0.6, min_samples=5):
    """Least squares ``log|I| = slope x + k log(tau) + b`` over the upper
    ``window_fraction`` of the tau range."""
    x_axis = XAxis(x_axis)
    win = _window(series, window_fraction)
    if len(win) < min_samples:
        raise FitError(f"need {min_samples} usable samples in the window, have {len(win)}")
    signs = np.sign([s.indicator for s in win])
    if np.any(signs != signs[0]):
        bad = next(s.tau for s, sg in zip(win, signs) if sg != signs[0])
        raise FitError(f"indicator changes sign inside the fit window at tau={bad:.6g}")
    tau = np.array([s.tau for s in win])
    y = np.log(np.abs([s.indicator for s in win]))
    A = np.column_stack([x_axis.of(tau), np.log(tau), np.ones_like(tau)])
    coef, *_ = np.linalg.lstsq(A, y, rcond=None)
    resid = y - A @ coef
    return RateFit(float(coef[0]), float(coef[2]), float(coef[1]), x_axis,
                   (float(tau.min()), float(tau.max())),
                   float(np.sqrt(np.mean(resid**2))), len(win))


def estimate_distance(fit, schedule):
    if fit.slope >= 0:
        raise FitError("no exponential decay detected")
    return -fit.slope / schedule.rate_factor()


def threshold_classify(series, exponent_kind, T=None, min_samples=5, jump=2.0):
    """Diverges, Vanishes or Borderline for ``e^{x(tau) T} |I(tau)|``.

    The trend is the least-squares slope of ``x T + log|I|`` against ``x``
    over the usable samples, multiplied by the span of ``x``; a total
    change beyond ``jump`` log units either way decides.
    """
    exponent_kind = XAxis(exponent_kind)
    T = series.T_final if T is None else T
    use = series.usable()
    if len(use) < min_samples:
        raise FitError(f"need {min_samples} usable samples, have {len(use)}")
    x = exponent_kind.of([s.tau for s in use])
    y = x * T + np.log(np.abs([s.indicator for s in use]))
    slope = np.polyfit(x, y, 1)[0]
    change = slope * (x.max() - x.min())
    if change > jump:
        return Behaviour.DIVERGES
    if change < -jump:
        return Behaviour.VANISHES
    return Behaviour.BORDERLINE


@dataclass(frozen=True)
class RatioCheck:
    ratio: float
    lower: float
    upper: float
    margin: float
    passed: bool


def ratio_bounds_check(series):
    """``I / (tau int_Omega |w0|^2)`` at the largest usable tau against
    ``[c - 1, (c - 1) c]`` widened by ``0.25 max(|c - 1|, 0.05)``."""
    c = series.schedule.c
    use = [s for s in series.samples if not s.floor_flag]
    if not use:
        raise FitError("no usable samples")
    s = use[-1]
    ratio = s.indicator / (s.tau * s.w0_l2_omega)
    lo, hi = sorted([c - 1.0, (c - 1.0) * c])
    m = 0.25 * max(abs(c - 1.0), 0.05)
    return RatioCheck(float(ratio), c - 1.0, (c - 1.0) * c, m,
                      bool(lo - m <= ratio <= hi + m))


def sign_onset(series):
    """Smallest sampled tau from which the indicator keeps one sign."""
    use = series.usable()
    if not use:
        return None
    last = np.sign(use[-1].indicator)
    onset = use[-1].tau
    for s in reversed(use):
        if np.sign(s.indicator) != last:
            break
        onset = s.tau
    return onset


# --- probe-only rates --------------------------------------------------------

def _fit_log(taus, values):
    taus = np.asarray(taus, dtype=float)
    y = np.log(np.abs(values))
    A = np.column_stack([taus, np.log(taus), np.ones_like(taus)])
    coef, *_ = np.linalg.lstsq(A, y, rcond=None)
    return float(coef[0])


def region_w0_norm(w, g, region, tau, tol=1e-12):
    """``||w0||_{L^2(U)}`` for ``U = D`` or ``Omega``."""
    radius = g.r_cavity if region == "D" else g.r_omega
    s, wt = ball_rule(radius, g.source.center_z, kinks=w0_kinks(w),
                      decay_rate=2 * tau * w.lam)
    val, _ = w0_eval(w, s, tau, tol=tol)
    return math.sqrt(wt @ val**2)


def propagation_rate_check(w, g, region, taus, tol=1e-12):
    """Slope of ``log ||w0||_{L^2(U)}`` against tau (with a ``log tau`` term).

    The expected value is ``-lambda dist(U, B)``.
    """
    if region not in ("D", "Omega"):
        raise ValueError("region must be 'D' or 'Omega'")
    norms = [region_w0_norm(w, g, region, t, tol) for t in taus]
    if min(norms) == 0:
        raise FitError("w0 norm underflowed to zero")
    return _fit_log(taus, norms)


def expected_propagation_rate(w, g, region):
    which = Distance.D_TO_B if region == "D" else Distance.OMEGA_TO_B
    return -w.lam * ball_distance(g, which)


def laplace_correction_slope(w, s, taus, tol=1e-12):
    """Slope in tau of ``log|w0 - v0|`` at distance ``s``; expected ``-T``."""
    diffs = []
    for t in taus:
        d = w0_eval(w, np.array([s]), t, tol=tol)[0][0] - float(v0_closed(w, s, t))
        diffs.append(d)
    return _fit_log(taus, diffs)


def flux_linearity_ratios(geometry, lam, T, taus, k, numerics=NumericsConfig()):
    """``I_k / I`` where ``I_k`` uses the heat data of the flux ``k f``.

    Both heat solves run separately; the scaled indicator uses the
    symmetric boundary form with the scaled transform and its Neumann data.
    """
    taus = np.asarray(taus, dtype=float)
    w, base = _time_sweep(geometry, T, lam, taus, numerics)
    _, scaled = _time_sweep(geometry, T, lam, taus, numerics, flux_scale=k)
    L = base.max_degree
    out = []
    for tau in taus:
        sh = project_shell_modes(w, geometry, tau, [geometry.r_omega], L, numerics.quad_tol)
        w0b, dw0b = sh.w0[0], sh.dw0[0]
        i1 = indicator_symmetric(geometry, base.transform(tau)[:, -1], dw0b, w0b, dw0b)
        ik = indicator_symmetric(geometry, scaled.transform(tau)[:, -1], k * dw0b, w0b, dw0b)
        out.append(ik / i1)
    return np.array(out)
