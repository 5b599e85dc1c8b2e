r"""Closed-form probe wave and its Laplace-domain companions.

The probe solves ``lambda^2 v_tt = Laplace v`` in R^3 with ``v(., 0) = 0`` and
``v_t(., 0) = Psi_B``, ``Psi_B(x) = (eta - |x - p|)_+``. For a radial initial
velocity the Kirchhoff formula collapses to a one-dimensional integral over
the radial profile, so with ``rho = t/lambda`` and
``A(r) = eta r^2/2 - r^3/3``

.. math:: v(s, t) = \frac{\lambda}{2s}\bigl(A(b) - A(a)\bigr),
          \quad a = \min(|s-\rho|, \eta),\ b = \min(s+\rho, \eta).

Evaluation is restricted to ``s >= eta``, where ``b = eta`` always; the
field then lives on the passage window ``lambda (s-eta) < t < lambda (s+eta)``
and is a cubic in ``t`` on either side of the kink ``t = lambda s``.
"""

from dataclasses import dataclass

import numpy as np

from .geometry import Ball, distance_on_sphere
from .quadrature import adaptive_panels


class WaveDomainError(ValueError):
    """Evaluation point inside the source ball or negative time."""


@dataclass(frozen=True)
class WaveField:
    source: Ball
    lam: float
    T_final: float
    amplitude: float = 1.0

    def __post_init__(self):
        if not self.lam > 0:
            raise ValueError(f"lambda must be positive, got {self.lam}")
        if not self.T_final > 0:
            raise ValueError(f"T_final must be positive, got {self.T_final}")

    @property
    def eta(self):
        return self.source.radius

    def scaled(self, k):
        """Same probe with initial velocity ``k * Psi_B``."""
        return WaveField(self.source, self.lam, self.T_final, self.amplitude * k)


@dataclass(frozen=True)
class RadialWaveValue:
    v: np.ndarray
    dv_ds: np.ndarray


def psi_B(s, eta):
    s = np.asarray(s, dtype=float)
    return np.where(s < eta, eta - s, 0.0)


def psi_norm_sq(eta):
    """``||Psi_B||^2_{L^2(R^3)} = 2 pi eta^5 / 15``."""
    return 2.0 * np.pi * eta**5 / 15.0


def _gap(a, eta):
    """``A(eta) - A(a)`` in factored form, exact near ``a = eta``."""
    return (eta - a) ** 2 * (eta + 2 * a) / 6.0


def _dprim(r, eta):
    return eta * r - r * r


def _check(w, s, t=None):
    s = np.asarray(s, dtype=float)
    # a hair of slack so boundary points computed in floating point pass
    if np.any(s < w.eta * (1 - 1e-14)):
        raise WaveDomainError("evaluation point lies inside the source ball")
    if t is not None and np.any(np.asarray(t) < 0):
        raise WaveDomainError("negative time")
    return s


def _window(w, s, rho):
    d = s - rho
    a = np.minimum(np.abs(d), w.eta)
    return a, np.sign(d)


def wave_eval(w, s, t):
    """``v`` and ``dv/ds`` at distance ``s`` from the centre of B, time ``t``."""
    s = _check(w, s, t)
    a, sgn = _window(w, s, np.asarray(t, dtype=float) / w.lam)
    k = w.amplitude * w.lam
    gap = _gap(a, w.eta)
    v = k * gap / (2 * s)
    dv = -k * gap / (2 * s * s) - k * _dprim(a, w.eta) * sgn / (2 * s)
    return RadialWaveValue(v, dv)


def wave_dt(w, s, t):
    """Exact ``dv/dt``."""
    s = _check(w, s, t)
    a, sgn = _window(w, s, np.asarray(t, dtype=float) / w.lam)
    return w.amplitude * _dprim(a, w.eta) * sgn / (2 * s)


def boundary_offsets(g, mu):
    """``s = |x - p|`` and ``(x - p).x/|x|`` on the outer sphere."""
    mu = np.asarray(mu, dtype=float)
    if np.any(np.abs(mu) > 1):
        raise WaveDomainError("|mu| must be <= 1")
    r, z = g.r_omega, g.source.center_z
    return distance_on_sphere(r, z, mu), r - z * mu


def flux_on_boundary(w, g, mu, t):
    """Normal derivative of ``v`` on ``|x| = r_omega`` at ``mu = cos(theta)``."""
    s, proj = boundary_offsets(g, mu)
    return wave_eval(w, s, t).dv_ds * proj / s


def _profile_from_arrival(w, s, y):
    """``v`` and ``dv/ds`` at ``rho = s - eta + y``, ``0 <= y <= 2 eta``.

    Writing the window in the offset ``y`` from the arrival keeps
    ``eta - a = min(y, 2 eta - y)`` exact, which the difference
    ``eta - |s - rho|`` is not when the wave has only just arrived.
    """
    eta = w.eta
    inner = np.minimum(y, 2 * eta - y)
    a = np.abs(eta - y)
    gap = inner**2 * (eta + 2 * a) / 6.0
    k = w.amplitude * w.lam
    v = k * gap / (2 * s)
    dv = -k * gap / (2 * s * s) - k * a * inner * np.sign(eta - y) / (2 * s)
    return v, dv


def w0_eval(w, s, tau, tol=1e-12, T=None):
    """``int_0^T e^{-tau t} v dt`` and its ``s``-derivative.

    The passage window is integrated in the offset ``y = t/lambda - (s - eta)``
    as two smooth pieces split at the kink ``y = eta``. ``T`` defaults to
    ``w.T_final``; ``T = inf`` gives the full transform ``v_0``.
    """
    if not tau > 0:
        raise ValueError("tau must be positive")
    s = np.atleast_1d(_check(w, s)).astype(float)
    T = w.T_final if T is None else T
    eta = w.eta
    arrival = s - eta
    ytop = np.clip(T / w.lam - arrival, 0.0, 2 * eta) if np.isfinite(T) else np.full(s.size, 2 * eta)
    kappa = tau * w.lam
    n = s.size

    def integrand(y, idx):
        ss = s[idx % n, None]
        v, dv = _profile_from_arrival(w, ss, y)
        e = w.lam * np.exp(-kappa * y)
        return np.stack([e * v, e * dv], axis=-1)

    lo2 = np.concatenate([np.zeros(n), np.full(n, eta)])
    hi2 = np.concatenate([np.minimum(ytop, eta), np.maximum(ytop, eta)])
    parts = adaptive_panels(integrand, lo2, hi2, tol=tol, ncomp=2)
    total = (parts[:n] + parts[n:]) * np.exp(-kappa * arrival)[:, None]
    return total[:, 0], total[:, 1]


def v0_bracket_scaled(x):
    """``(-2 cosh x + x sinh x + 2) e^{-x}`` without cancellation or overflow."""
    x = np.asarray(x, dtype=float)
    out = np.empty_like(x)
    small = x < 1.0
    xs = x[small]
    term = np.zeros_like(xs)
    x2 = xs * xs
    power, fact = x2 * x2, 24.0
    for k in range(2, 22):
        term += (2 * k - 2) * power / fact
        power = power * x2
        fact *= (2 * k + 1) * (2 * k + 2)
    out[small] = term * np.exp(-xs)
    xl = x[~small]
    em = np.exp(-xl)
    out[~small] = (xl / 2 - 1) + (2 - (1 + xl / 2) * em) * em
    return out


def v0_closed(w, s, tau):
    """Full-line Laplace transform ``v_0 = int_0^inf e^{-tau t} v dt``.

    ``v_0 = e^{-tau lam s} / (tau^4 lam^2 s) (-2 cosh x + x sinh x + 2)``
    with ``x = tau lam eta``, evaluated as ``e^{-k (s - eta)}`` times the
    bracket scaled by ``e^{-x}`` so nothing overflows.
    """
    s = _check(w, s)
    x = tau * w.lam * w.eta
    if not x < 700:
        raise OverflowError(f"tau*lambda*eta = {x:.1f} exceeds the overflow guard 700")
    kappa = tau * w.lam
    b = v0_bracket_scaled(np.full(np.shape(s), x))
    return w.amplitude * np.exp(-kappa * (s - w.eta)) * b / (tau**4 * w.lam**2 * s)


def v0_closed_ds(w, s, tau):
    """``d v_0 / ds``."""
    s = np.asarray(s, dtype=float)
    return -v0_closed(w, s, tau) * (tau * w.lam + 1.0 / s)


def F0_eval(w, s, tau, T=None):
    """``v_t(s, T) + tau v(s, T)``."""
    T = w.T_final if T is None else T
    return wave_dt(w, s, T) + tau * wave_eval(w, s, T).v


def kink_distances(w, t):
    """Distances ``s`` at which ``v(., t)`` or its derivatives lose smoothness."""
    rho = t / w.lam
    return tuple(x for x in (rho - w.eta, rho, rho + w.eta) if x > 0)
