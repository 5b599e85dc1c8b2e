"""Laplace-domain fields, the indicator and its decomposition.

Two routes produce the modal heat transform ``w_l(r)`` on the shell:

* ``time``: Crank-Nicolson heat solve, transforms accumulated on the fly;
  ``R = w - w0`` is formed by subtraction.
* ``laplace``: the transform obeys ``(Delta - tau) w = e^{-tau T} u(T)``
  with the Neumann data of ``w0``. When ``e^{-tau T}`` is negligible each
  mode is a combination of modified spherical Bessel functions, and
  ``R`` itself is computed in closed form. This is the only route that
  resolves ``R`` when ``lambda^2 tau^2 = tau``, where ``R/w0`` on the
  outer sphere is of order ``e^{-2 sqrt(tau) (r_omega - r_cavity)}``.

The analytic probe supplies ``w0``, ``dw0/dr`` and ``F0`` mode by mode on
every radius, and volume integrals of functions of ``|x - p|`` over the
balls are done in the source-centred variable.
"""

from dataclasses import dataclass

import numpy as np
from scipy.integrate import simpson
from scipy.special import ive, kve

from .geometry import (ball_rule, boundary_integral, legendre_table, mode_norms,
                       sphere_integral, sphere_rule)
from .quadrature import laplace_weights, panel_rule, refine_edges
from .wavefield import F0_eval, w0_eval

FLOOR_FACTOR = 1e2


@dataclass(frozen=True)
class LaplaceBoundaryData:
    tau: float
    w_coeffs: np.ndarray
    w0_coeffs: np.ndarray
    dw0_coeffs: np.ndarray
    r_coeffs: np.ndarray = None

    def __post_init__(self):
        n = len(self.w0_coeffs)
        for name in ("w_coeffs", "dw0_coeffs", "r_coeffs"):
            v = getattr(self, name)
            if v is not None and len(v) != n:
                raise ValueError(f"{name} has length {len(v)}, expected {n}")

    @property
    def difference(self):
        """``w - w0`` on the boundary, direct when a route resolved it."""
        if self.r_coeffs is not None:
            return np.asarray(self.r_coeffs)
        return np.asarray(self.w_coeffs) - np.asarray(self.w0_coeffs)


@dataclass(frozen=True)
class IndicatorSample:
    tau: float
    lam: float
    indicator: float
    bulk_term: float
    j_h: float
    e_h: float
    r_cal: float
    decomp_residual: float
    w0_l2_omega: float
    w0_l2_d: float
    first_rep_residual: float = np.nan
    floor_flag: bool = False
    route: str = "time"

    def __post_init__(self):
        if self.j_h < 0 or self.e_h < 0:
            raise ValueError("J_h and E_h are integrals of squares and cannot be negative")

    @property
    def term_scale(self):
        return (abs(self.bulk_term) + self.j_h + self.e_h + abs(self.r_cal)
                + abs(self.indicator))

    @property
    def relative_residual(self):
        scale = self.term_scale
        return abs(self.decomp_residual) / scale if scale > 0 else 0.0

    @property
    def sign(self):
        return int(np.sign(self.indicator))


def laplace_transform_history(history, tau):
    """``int_0^T e^{-tau t} u_l(r_i, t) dt`` from a stored history."""
    if not tau > 0:
        raise ValueError("tau must be positive")
    if history.values is None:
        raise ValueError("history was solved without storing values")
    return laplace_weights(history.times, tau) @ history.values


def indicator_value(data, g):
    return boundary_integral(g, data.difference, data.dw0_coeffs)


def indicator_symmetric(g, w_coeffs, dw_coeffs, w0_coeffs, dw0_coeffs):
    """``int (w dw0/dn - w0 dw/dn) dS``, the form that stays linear in the flux."""
    return (boundary_integral(g, w_coeffs, dw0_coeffs)
            - boundary_integral(g, w0_coeffs, dw_coeffs))


def w0_kinks(w):
    rho = w.T_final / w.lam
    return tuple(x for x in (rho - w.eta, rho, rho + w.eta) if x > 0)


@dataclass(frozen=True)
class ShellModes:
    """Legendre modes of the analytic fields on spheres ``|x| = r``.

    Arrays have shape ``(len(r), L+1)``: ``w0``, its radial derivative
    ``dw0`` and ``f0 = v_t(., T) + tau v(., T)``.
    """

    r: np.ndarray
    w0: np.ndarray
    dw0: np.ndarray
    f0: np.ndarray


def project_shell_modes(w, g, tau, radii, max_degree, tol=1e-12):
    """Project ``w0``, ``d w0/dr`` and ``F0`` on each sphere of ``radii``."""
    z = g.source.center_z
    radii = np.atleast_1d(np.asarray(radii, dtype=float))
    kinks = w0_kinks(w)
    rules = [sphere_rule(r, z, max_degree, kinks=kinks, decay_rate=tau * w.lam)
             for r in radii]
    mu = np.concatenate([m for m, _ in rules])
    rr = np.concatenate([np.full(m.size, r) for r, (m, _) in zip(radii, rules)])
    s = np.sqrt(np.maximum(rr * rr + z * z - 2 * rr * z * mu, 0.0))
    val, ds = w0_eval(w, s, tau, tol=tol)
    dr = ds * (rr - z * mu) / s
    f0 = F0_eval(w, s, tau)
    scale = (2.0 * np.arange(max_degree + 1) + 1.0) / 2.0
    out = np.zeros((3, radii.size, max_degree + 1))
    start = 0
    for i, (m, wt) in enumerate(rules):
        sl = slice(start, start + m.size)
        P = legendre_table(max_degree, m) * wt
        for j, arr in enumerate((val, dr, f0)):
            out[j, i] = P @ arr[sl] * scale
        start += m.size
    return ShellModes(radii, out[0], out[1], out[2])


def choose_max_degree(w, g, tau, tol=1e-14, cap=120, quad_tol=1e-12):
    """Mode cutoff from the outer Neumann data ``d w0_l/dr`` at ``tau``.

    Returns the smallest ``L`` whose discarded tail carries at most ``tol``
    of the boundary ``L^2`` energy ``sum 2/(2l+1) |g_l|^2``, capped at
    ``cap``. The Laplace-domain data are used rather than the time-domain
    flux, whose angular kinks make its coefficients decay only
    algebraically at any fixed time.
    """
    c = project_shell_modes(w, g, tau, [g.r_omega], cap, quad_tol).dw0[0]
    energy = mode_norms(cap) * c**2
    total = energy.sum()
    if total == 0:
        return 2
    tail = np.cumsum(energy[::-1])[::-1]  # tail[l] = energy in modes >= l
    ok = np.flatnonzero(tail <= tol * total)
    return int(max(2, ok[0] - 1)) if ok.size else cap


def ball_integrals(w, tau, radius, center_z, tol=1e-12):
    """``int_{|y|<radius}`` of ``w0^2``, ``|grad w0|^2`` and ``F0 w0``."""
    s, wt = ball_rule(radius, center_z, kinks=w0_kinks(w), decay_rate=2 * tau * w.lam)
    val, ds = w0_eval(w, s, tau, tol=tol)
    f0 = F0_eval(w, s, tau)
    return wt @ val**2, wt @ ds**2, wt @ (f0 * val)


# --- modal radial fields -----------------------------------------------------

@dataclass(frozen=True)
class ModalFields:
    """Everything the indicator needs at one ``tau``, mode by mode.

    Radial arrays have shape ``(L+1, nr)`` on nodes ``r`` with integration
    weights ``rw`` (``int f r^2 dr ~ sum rw f``); the first and last node
    are the cavity and outer radii. ``u_final`` is ``None`` when the route
    drops the ``e^{-tau T}`` forcing.
    """

    tau: float
    lam: float
    route: str
    r: np.ndarray
    rw: np.ndarray
    w: np.ndarray
    R: np.ndarray
    dR: np.ndarray
    u_final: np.ndarray
    shell: ShellModes
    e_tau_T: float

    @property
    def max_degree(self):
        return self.R.shape[0] - 1

    def boundary_data(self):
        return LaplaceBoundaryData(self.tau, self.w[:, -1], self.shell.w0[-1],
                                   self.shell.dw0[-1], self.R[:, -1])


def fd_derivative(f, h):
    """Fourth-order finite differences along the last axis of a uniform grid."""
    f = np.asarray(f, dtype=float)
    d = np.empty_like(f)
    d[..., 2:-2] = (f[..., :-4] - 8 * f[..., 1:-3] + 8 * f[..., 3:-1] - f[..., 4:]) / (12 * h)
    d[..., 0] = (-25 * f[..., 0] + 48 * f[..., 1] - 36 * f[..., 2] + 16 * f[..., 3]
                 - 3 * f[..., 4]) / (12 * h)
    d[..., 1] = (-3 * f[..., 0] - 10 * f[..., 1] + 18 * f[..., 2] - 6 * f[..., 3]
                 + f[..., 4]) / (12 * h)
    d[..., -1] = -(-25 * f[..., -1] + 48 * f[..., -2] - 36 * f[..., -3] + 16 * f[..., -4]
                   - 3 * f[..., -5]) / (12 * h)
    d[..., -2] = -(-3 * f[..., -1] - 10 * f[..., -2] + 18 * f[..., -3] - 6 * f[..., -4]
                   + f[..., -5]) / (12 * h)
    return d


def simpson_weights(x):
    """Weights of the composite Simpson rule on the nodes ``x``."""
    n = x.size
    eye = np.eye(n)
    return simpson(eye, x=x, axis=1)


def time_route_fields(sol, w, g, tau, tol=1e-12):
    """Fields from a heat solve that accumulated the transform at ``tau``."""
    r = sol.grid.r_nodes
    L = sol.max_degree
    shell = project_shell_modes(w, g, tau, r, L, tol)
    wl = sol.transform(tau)
    R = wl - shell.w0.T
    dR = fd_derivative(wl, sol.grid.h) - shell.dw0.T
    rw = simpson_weights(r) * r**2
    return ModalFields(tau, w.lam, "time", r, rw, wl, R, dR, sol.final, shell,
                       float(np.exp(-tau * w.T_final)))


def _sph_scaled(l, x):
    """``i_l(x) e^{-x}``, ``k_l(x) e^{x}`` and their ``x``-derivatives, same scaling."""
    l = np.asarray(l, dtype=float)[:, None]
    x = np.asarray(x, dtype=float)[None, :]
    f = np.sqrt(np.pi / (2 * x))
    i0, i1 = f * ive(l + 0.5, x), f * ive(l + 1.5, x)
    k0, k1 = f * kve(l + 0.5, x), f * kve(l + 1.5, x)
    return i0, i1 + (l / x) * i0, k0, -k1 + (l / x) * k0


def neumann_modes(max_degree, q, a, b, alpha_a, alpha_b, r):
    """Modes with ``(Delta_l - q^2) u = 0`` on ``a < r < b``, ``u'(a) = alpha_a``,
    ``u'(b) = alpha_b``, as values and derivatives on ``r``.

    With ``u = A e^{q a} k~_l(q r) e^{-q(r-a)} + B e^{-q b} i~_l(q r) e^{q(r-b)}``
    in exponentially scaled Bessel functions, the 2x2 system for ``A, B``
    has off-diagonal entries of size ``e^{-q(b-a)}`` and is well conditioned
    however large ``q`` gets.
    """
    l = np.arange(max_degree + 1)
    ia, dia, ka, dka = _sph_scaled(l, [q * a])
    ib, dib, kb, dkb = _sph_scaled(l, [q * b])
    d = np.exp(-q * (b - a))
    m11, m12 = dka[:, 0], dia[:, 0] * d
    m21, m22 = dkb[:, 0] * d, dib[:, 0]
    det = m11 * m22 - m12 * m21
    ra, rb = np.asarray(alpha_a) / q, np.asarray(alpha_b) / q
    A = (ra * m22 - m12 * rb) / det
    B = (m11 * rb - m21 * ra) / det
    i_r, di_r, k_r, dk_r = _sph_scaled(l, q * r)
    ek = np.exp(-q * (r - a))[None, :]
    ei = np.exp(q * (r - b))[None, :]
    u = A[:, None] * k_r * ek + B[:, None] * i_r * ei
    du = q * (A[:, None] * dk_r * ek + B[:, None] * di_r * ei)
    return u, du


def radial_gauss_rule(a, b, rate, n=16):
    """Gauss panels on ``[a, b]`` no wider than ``min(0.05, 4/rate)``."""
    width = 0.05 if rate <= 0 else min(0.05, 4.0 / rate)
    return panel_rule(refine_edges([a, b], width), n)


def laplace_route_fields(w, g, tau, max_degree, tol=1e-12):
    """Closed-form modal fields with the ``e^{-tau T}`` forcing dropped.

    When ``lambda^2 tau^2 = tau`` the analytic ``w0`` itself solves the
    heat-transform equation in the shell, so ``R`` solves the homogeneous
    problem with ``R'(b) = 0`` and ``R'(a) = -dw0/dr``; otherwise ``w`` is
    solved from the outer Neumann data and ``R = w - w0``.
    """
    a, b = g.r_cavity, g.r_omega
    q = np.sqrt(tau)
    rate = max(q, tau * w.lam)
    x, wt = radial_gauss_rule(a, b, rate)
    r = np.concatenate([[a], x, [b]])
    rw = np.concatenate([[0.0], wt * x**2, [0.0]])
    shell = project_shell_modes(w, g, tau, r, max_degree, tol)
    w0, dw0 = shell.w0.T, shell.dw0.T
    zero = np.zeros(max_degree + 1)
    if np.isclose(w.lam**2 * tau**2, tau, rtol=1e-12, atol=0):
        R, dR = neumann_modes(max_degree, q, a, b, -dw0[:, 0], zero, r)
        wl = R + w0
    else:
        wl, dwl = neumann_modes(max_degree, q, a, b, zero, dw0[:, -1], r)
        R, dR = wl - w0, dwl - dw0
    return ModalFields(tau, w.lam, "laplace", r, rw, wl, R, dR, None, shell,
                       float(np.exp(-tau * w.T_final)))


# --- the indicator and its decomposition ------------------------------------

def _shell_integral(fields, f, gfun):
    """``int_{shell} f g dx`` for two modal radial arrays."""
    norms = mode_norms(fields.max_degree)
    return 2 * np.pi * np.sum(norms[:, None] * f * gfun * fields.rw[None, :])


def boundary_floor(fields, g):
    """Magnitude below which the indicator is not resolved in double precision."""
    d = fields.boundary_data()
    if fields.route == "laplace":
        big = np.abs(d.r_coeffs * d.dw0_coeffs).max()
    else:
        big = max(np.abs(d.w_coeffs * d.dw0_coeffs).max(),
                  np.abs(d.w0_coeffs * d.dw0_coeffs).max())
    return FLOOR_FACTOR * np.finfo(float).eps * big * 4 * np.pi * g.r_omega**2


def decomposition_terms(fields, w, g, tol=1e-12):
    """Indicator and every term of its volume decomposition at one ``tau``."""
    tau, lam = fields.tau, fields.lam
    z = g.source.center_z
    ind = indicator_value(fields.boundary_data(), g)
    om_sq, _, _ = ball_integrals(w, tau, g.r_omega, z, tol)
    d_sq, d_grad, d_f0w0 = ball_integrals(w, tau, g.r_cavity, z, tol)
    bulk = (lam**2 * tau**2 - tau) * om_sq
    if np.isclose(lam**2 * tau**2, tau, rtol=1e-12, atol=0):
        bulk = 0.0
    j_h = d_grad + tau * d_sq
    ll = (np.arange(fields.max_degree + 1) * (np.arange(fields.max_degree + 1) + 1.0))
    R, dR, r = fields.R, fields.dR, fields.r
    inv_r2 = np.divide(1.0, r**2)
    e_h = _shell_integral(fields, dR, dR) + _shell_integral(
        fields, R, R * (ll[:, None] * inv_r2[None, :] + tau))
    e = fields.e_tau_T
    if fields.u_final is None:
        r_cal = 0.0
    else:
        w0, f0 = fields.shell.w0.T, fields.shell.f0.T
        uT = fields.u_final
        r_cal = e * (lam**2 * d_f0w0 + _shell_integral(fields, uT, R)
                     + _shell_integral(fields, lam**2 * f0 - uT, w0))
    resid = ind - (bulk + j_h + e_h + r_cal)
    first = verify_first_representation(fields, g) if fields.u_final is not None else np.nan
    flag = bool(abs(ind) < boundary_floor(fields, g))
    return IndicatorSample(tau, lam, float(ind), float(bulk), float(j_h), float(e_h),
                           float(r_cal), float(resid), float(om_sq), float(d_sq),
                           float(first), flag, fields.route)


def verify_first_representation(fields, g):
    """Indicator minus its cavity-boundary plus volume representation.

    ``e^{-tau T} F`` is used in the fused form
    ``e^{-tau T} u(T) + (tau - lambda^2 tau^2) w``.
    """
    tau, lam = fields.tau, fields.lam
    ind = indicator_value(fields.boundary_data(), g)
    w0, f0, wl = fields.shell.w0.T, fields.shell.f0.T, fields.w
    cavity = sphere_integral(g.r_cavity, wl[:, 0], fields.shell.dw0[0])
    eF = fields.e_tau_T * fields.u_final + (tau - lam**2 * tau**2) * wl
    vol = _shell_integral(fields, fields.e_tau_T * lam**2 * f0, wl) - _shell_integral(
        fields, eF, w0)
    return ind - (cavity + vol)


def first_representation_scale(fields, g):
    tau, lam = fields.tau, fields.lam
    w0, f0, wl = fields.shell.w0.T, fields.shell.f0.T, fields.w
    cavity = abs(sphere_integral(g.r_cavity, wl[:, 0], fields.shell.dw0[0]))
    a = abs(_shell_integral(fields, fields.e_tau_T * lam**2 * f0, wl))
    b = abs(_shell_integral(fields, fields.e_tau_T * fields.u_final, w0))
    c = abs(_shell_integral(fields, (tau - lam**2 * tau**2) * wl, w0))
    ind = abs(indicator_value(fields.boundary_data(), g))
    return cavity + a + b + c + ind
