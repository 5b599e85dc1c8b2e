"""Independent reference computations used by the verification suite.

None of these reuse the closed forms they check: the wave is rebuilt from
its spherical mean by quadrature, ``v0`` from the volume potential over the
source ball, and ``w0`` from a dense trapezoid rule in time.
"""

import numpy as np
from scipy.integrate import quad

from .quadrature import gauss_legendre, panel_rule, refine_edges


def spherical_mean_wave(eta, lam, s, t, n=64):
    """``t`` times the mean of ``Psi_B`` over the sphere of radius ``t/lambda``
    about a point at distance ``s`` from the source centre.

    Polar angle is measured from the direction to the source centre and
    written as ``cos(theta) = 1 - u^2``, so that
    ``|y - p|^2 = (s - rho)^2 + 2 s rho u^2`` stays smooth even when the
    sphere passes through ``p``; the cone profile kinks at ``|y - p| = eta``
    and the Gauss panels in ``u`` break there.
    """
    rho = t / lam
    if rho == 0:
        return 0.0
    edges = [0.0, np.sqrt(2.0)]
    u2 = (eta * eta - (s - rho) ** 2) / (2 * s * rho)
    if 0 < u2 < 2:
        edges.append(np.sqrt(u2))
    u, w = panel_rule(refine_edges(edges, 0.2), n)
    d = np.sqrt((s - rho) ** 2 + 2 * s * rho * u * u)
    w = w * 2 * u
    psi = np.where(d < eta, eta - d, 0.0)
    return t * 0.5 * (w @ psi)


def volume_potential_v0(eta, lam, s, tau, epsrel=1e-12):
    """``(lambda^2 / 4 pi) int_B e^{-tau lambda |x-y|} / |x-y| (eta - |y-p|) dy``.

    Nested adaptive quadrature in spherical coordinates about ``p``; the
    azimuth integrates to ``2 pi``.
    """
    kappa = tau * lam

    def inner(r):
        def f(c):
            d = np.sqrt(s * s + r * r - 2 * s * r * c)
            return np.exp(-kappa * (d - (s - eta))) / d
        return quad(f, -1.0, 1.0, epsabs=0, epsrel=epsrel, limit=200)[0]

    val = quad(lambda r: r * r * (eta - r) * inner(r), 0.0, eta, epsabs=0,
               epsrel=epsrel, limit=200)[0]
    return lam**2 / (4 * np.pi) * 2 * np.pi * val * np.exp(-kappa * (s - eta))


def trapezoid_w0(eval_v, t_lo, t_hi, tau, n=200001):
    """Dense trapezoid rule for ``int e^{-tau t} v dt`` over ``[t_lo, t_hi]``."""
    t = np.linspace(t_lo, t_hi, n)
    return np.trapezoid(np.exp(-tau * t) * eval_v(t), t)


def sphere_surface_integral(radius, fa, fb, n=64):
    """``int_{|x|=radius} fa(mu) fb(mu) dS`` by a 2D Gauss x trapezoid rule."""
    mu, w = gauss_legendre(n)
    phi = np.linspace(0, 2 * np.pi, 2 * n, endpoint=False)
    vals = (fa(mu) * fb(mu))[:, None] * np.ones_like(phi)[None, :]
    return radius**2 * (w @ vals).sum() * (2 * np.pi / phi.size)
