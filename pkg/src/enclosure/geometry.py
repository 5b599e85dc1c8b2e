"""Concentric-shell geometry, exact distances and Legendre-mode tools.

Everything is axisymmetric about the z-axis: the conductor is the ball of
radius ``r_omega`` centred at the origin, the cavity the concentric ball of
radius ``r_cavity``, and the source ball sits on the positive z-axis. A
boundary function ``a(mu)``, ``mu = cos(theta)``, is represented by its
Legendre coefficients ``a_l = (2l+1)/2 * int a P_l dmu``.
"""

from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .quadrature import gauss_legendre, panel_rule, refine_edges


@dataclass(frozen=True)
class Ball:
    center_z: float
    radius: float

    def __post_init__(self):
        if not self.radius > 0:
            raise ValueError(f"ball radius must be positive, got {self.radius}")


@dataclass(frozen=True)
class ProbeGeometry:
    r_omega: float
    r_cavity: float
    source: Ball

    def __post_init__(self):
        if not 0 < self.r_cavity < self.r_omega:
            raise ValueError(
                f"need 0 < r_cavity < r_omega, got {self.r_cavity}, {self.r_omega}")
        if not self.source.center_z - self.source.radius > self.r_omega:
            raise ValueError("B intersects Omega: source ball must lie outside the conductor")

    @property
    def dist_omega(self):
        return ball_distance(self, Distance.OMEGA_TO_B)

    @property
    def dist_cavity(self):
        return ball_distance(self, Distance.D_TO_B)

    def boundary_distance_range(self):
        """Min and max of ``|x - p|`` over the outer sphere."""
        z = self.source.center_z
        return z - self.r_omega, z + self.r_omega


REFERENCE_GEOMETRY = ProbeGeometry(1.0, 0.4, Ball(1.5, 0.2))


class Distance(Enum):
    OMEGA_TO_B = "OmegaToB"
    D_TO_B = "DToB"


def ball_distance(g, which):
    which = Distance(which)
    gap = g.source.center_z - g.source.radius
    if which is Distance.OMEGA_TO_B:
        return gap - g.r_omega
    return gap - g.r_cavity


def legendre_eval(l, mu):
    """``P_l(mu)`` by the three-term recurrence."""
    if l < 0:
        raise ValueError("degree must be non-negative")
    if abs(mu) > 1:
        raise ValueError(f"|mu| must be <= 1, got {mu}")
    p0, p1 = 1.0, mu
    if l == 0:
        return p0
    for k in range(1, l):
        p0, p1 = p1, ((2 * k + 1) * mu * p1 - k * p0) / (k + 1)
    return p1


def legendre_table(max_degree, mu):
    """Array ``P[l, j] = P_l(mu_j)`` for ``l = 0..max_degree``."""
    mu = np.asarray(mu, dtype=float)
    out = np.empty((max_degree + 1,) + mu.shape)
    out[0] = 1.0
    if max_degree >= 1:
        out[1] = mu
    for k in range(1, max_degree):
        out[k + 1] = ((2 * k + 1) * mu * out[k] - k * out[k - 1]) / (k + 1)
    return out


def mode_norms(max_degree):
    """``int_{-1}^{1} P_l^2 dmu = 2/(2l+1)``."""
    return 2.0 / (2.0 * np.arange(max_degree + 1) + 1.0)


@dataclass(frozen=True)
class ModeBasis:
    """Legendre modes ``0..max_degree`` with a Gauss-Legendre node set."""

    max_degree: int
    nodes: np.ndarray
    weights: np.ndarray
    table: np.ndarray = field(repr=False)

    @classmethod
    def from_degree(cls, max_degree, extra_nodes=8):
        if max_degree < 0:
            raise ValueError("max_degree must be non-negative")
        x, w = gauss_legendre(max_degree + 1 + extra_nodes)
        return cls(max_degree, x, w, legendre_table(max_degree, x))

    def __post_init__(self):
        if self.nodes.size < self.max_degree + 1:
            raise ValueError("need at least max_degree+1 nodes")

    def project(self, samples):
        return project_modes(self, samples)

    def reconstruct(self, coeffs, mu=None):
        coeffs = np.asarray(coeffs, dtype=float)
        table = self.table if mu is None else legendre_table(coeffs.shape[-1] - 1, mu)
        return np.tensordot(coeffs, table, axes=(-1, 0))


def project_modes(basis, samples):
    """Legendre coefficients of samples taken at ``basis.nodes`` (last axis)."""
    samples = np.asarray(samples, dtype=float)
    if samples.shape[-1] != basis.nodes.size:
        raise ValueError(
            f"expected {basis.nodes.size} samples on the last axis, got {samples.shape[-1]}")
    scale = (2.0 * np.arange(basis.max_degree + 1) + 1.0) / 2.0
    return (samples * basis.weights) @ basis.table.T * scale


def project_on_rule(max_degree, mu, weights, samples):
    """Same as :func:`project_modes` for an arbitrary rule ``(mu, weights)``."""
    table = legendre_table(max_degree, mu)
    scale = (2.0 * np.arange(max_degree + 1) + 1.0) / 2.0
    return (np.asarray(samples) * weights) @ table.T * scale


def sphere_integral(radius, a_coeffs, b_coeffs):
    """``int_{|x|=radius} a b dS`` for two Legendre expansions."""
    a = np.asarray(a_coeffs, dtype=float)
    b = np.asarray(b_coeffs, dtype=float)
    if a.shape[-1] != b.shape[-1]:
        raise ValueError("coefficient vectors differ in length")
    return 2 * np.pi * radius**2 * np.sum(mode_norms(a.shape[-1] - 1) * a * b, axis=-1)


def boundary_integral(g, a_coeffs, b_coeffs):
    return sphere_integral(g.r_omega, a_coeffs, b_coeffs)


def mu_for_distance(r, z, s):
    """``mu`` at which the sphere ``|x| = r`` is at distance ``s`` from ``(0,0,z)``."""
    return (r * r + z * z - np.asarray(s, float) ** 2) / (2 * r * z)


def distance_on_sphere(r, z, mu):
    return np.sqrt(np.maximum(r * r + z * z - 2 * r * z * np.asarray(mu, float), 0.0))


def sphere_rule(r, z, max_degree, kinks=(), decay_rate=0.0, n=16, s_range=None):
    """Gauss panels in ``mu`` on the sphere ``|x| = r``.

    Panels break at every ``mu`` where ``|x - p|`` equals one of ``kinks``
    (the integrand may lose smoothness there), are narrow enough in the
    polar angle to resolve ``P_max_degree``, and are uniform in ``s = |x - p|`` with
    width ``<= 4/decay_rate`` to follow factors like ``exp(-decay_rate*s)``.
    ``s_range`` restricts the rule to the band ``s_range[0] <= s <= s_range[1]``
    (for integrands supported there).
    """
    s_lo, s_hi = abs(z - r), z + r
    if s_range is not None:
        s_lo, s_hi = max(s_lo, s_range[0]), min(s_hi, s_range[1])
        if s_hi <= s_lo:
            return np.empty(0), np.empty(0)
    edges = [max(-1.0, float(mu_for_distance(r, z, s_hi))),
             min(1.0, float(mu_for_distance(r, z, s_lo)))]
    for s in kinks:
        if s_lo < s < s_hi:
            edges.append(float(mu_for_distance(r, z, s)))
    if decay_rate > 0:
        m = int(np.ceil((s_hi - s_lo) * decay_rate / 4.0))
        edges.extend(mu_for_distance(r, z, np.linspace(s_lo, s_hi, m + 1)).tolist())
    edges = np.clip(edges, edges[0], edges[1])
    # P_l oscillates on a scale 1/l in the polar angle, so refine in theta
    theta = refine_edges(np.arccos(edges), min(0.25, 8.0 / (max_degree + 1)))
    return panel_rule(np.unique(np.cos(theta)), n)


def ball_volume_weight(radius, z, s):
    """Area of ``{|y - p| = s} ∩ {|y| < radius}`` with ``p = (0,0,z)``, ``z > radius``.

    Integrating it against ``g(s)`` gives ``int_{|y|<radius} g(|y - p|) dy``.
    """
    s = np.asarray(s, dtype=float)
    cap = np.pi * s * (radius**2 - (z - s) ** 2) / z
    return np.where((s > z - radius) & (s < z + radius), cap, 0.0)


def ball_rule(radius, z, kinks=(), decay_rate=0.0, n=16):
    """Nodes in ``s`` and weights for ``int_{|y|<radius} g(|y-p|) dy``.

    The ball is written in spherical coordinates centred at ``p``; the
    angular factor of a function of ``s`` alone is the cap area, so only
    the ``s`` direction needs Gauss panels.
    """
    s_lo, s_hi = z - radius, z + radius
    edges = [s_lo, s_hi] + [s for s in kinks if s_lo < s < s_hi]
    width = 0.1 if decay_rate <= 0 else min(0.1, 4.0 / decay_rate)
    s, w = panel_rule(refine_edges(edges, width), n)
    return s, w * ball_volume_weight(radius, z, s)
