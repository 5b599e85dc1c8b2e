"""Gauss-Legendre panels, vectorized adaptive panel integration and
exponential-weight moments used by the Laplace transforms."""

from functools import lru_cache

import numpy as np


class QuadratureError(RuntimeError):
    """Adaptive quadrature did not reach its tolerance."""


@lru_cache(maxsize=None)
def gauss_legendre(n):
    x, w = np.polynomial.legendre.leggauss(n)
    x.setflags(write=False)
    w.setflags(write=False)
    return x, w


def panel_rule(edges, n=16):
    """Composite Gauss rule on consecutive panels ``[edges[k], edges[k+1]]``.

    Zero-width panels are dropped. Returns flat ``(nodes, weights)``.
    """
    edges = np.asarray(edges, dtype=float)
    lo, hi = edges[:-1], edges[1:]
    keep = hi > lo
    lo, hi = lo[keep, None], hi[keep, None]
    x, w = gauss_legendre(n)
    half = 0.5 * (hi - lo)
    return (0.5 * (lo + hi) + half * x).ravel(), (half * w).ravel()


def refine_edges(edges, max_width):
    """Subdivide each panel so no piece is wider than ``max_width``."""
    edges = np.unique(np.asarray(edges, dtype=float))
    out = [edges[:1]]
    for a, b in zip(edges[:-1], edges[1:]):
        m = max(1, int(np.ceil((b - a) / max_width)))
        out.append(np.linspace(a, b, m + 1)[1:])
    return np.concatenate(out)


def adaptive_panels(f, lo, hi, tol=1e-12, n=16, max_depth=30, ncomp=1):
    """Integrate ``f`` over many intervals at once.

    Parameters
    ----------
    f : callable
        ``f(t, idx)`` evaluates the integrand at nodes ``t`` of shape
        ``(m, n)`` for the intervals belonging to points ``idx`` (shape
        ``(m,)``). It may return an array with a trailing component axis
        ``(m, n, k)`` to integrate ``k`` integrands sharing the nodes.
    lo, hi : array_like
        Interval end points, one pair per point. Empty intervals give 0.
    tol : float
        Relative tolerance, measured against the integral of ``|f|`` over the
        whole interval of each point.

    ncomp : int
        Number of components returned when every interval is empty.

    Each interval is compared against the sum over its two halves; the
    halves replace it until they agree.
    """
    lo = np.atleast_1d(np.asarray(lo, dtype=float))
    hi = np.atleast_1d(np.asarray(hi, dtype=float))
    x, w = gauss_legendre(n)
    idx = np.nonzero(hi > lo)[0]
    a, b = lo[idx], hi[idx]

    def rule(a, b, idx):
        half = 0.5 * (b - a)
        t = 0.5 * (a + b)[:, None] + half[:, None] * x
        vals = np.asarray(f(t, idx), dtype=float)
        if vals.ndim == 2:
            vals = vals[..., None]
        hw = (half[:, None] * w)[..., None]
        return (vals * hw).sum(axis=1), (np.abs(vals) * hw).sum(axis=1)

    whole, wabs = rule(a, b, idx)
    # tolerance is shared out over sub-intervals in proportion to width
    budget = np.zeros(lo.size)
    budget[idx] = tol * wabs.max(axis=1) / (b - a)
    total = None
    for _ in range(max_depth):
        if idx.size == 0:
            break
        mid = 0.5 * (a + b)
        left, labs = rule(a, mid, idx)
        right, rabs = rule(mid, b, idx)
        fine = left + right
        if total is None:
            total = np.zeros((lo.size, fine.shape[1]))
        err = np.abs(fine - whole).max(axis=1)
        scale = np.maximum((labs + rabs).max(axis=1) * tol, budget[idx] * (b - a))
        ok = err <= scale + 1e-300
        np.add.at(total, idx[ok], fine[ok])
        bad = ~ok
        idx = np.concatenate([idx[bad], idx[bad]])
        a, b = np.concatenate([a[bad], mid[bad]]), np.concatenate([mid[bad], b[bad]])
        whole = np.concatenate([left[bad], right[bad]])
    else:
        if idx.size:
            raise QuadratureError(
                f"adaptive quadrature failed on {idx.size} intervals after {max_depth} levels")
    if total is None:
        total = np.zeros((lo.size, ncomp))
    return total


def exp_moments(rate, width, kmax=2):
    """Moments ``m_k = int_0^width x^k exp(-rate x) dx`` for ``k = 0..kmax``.

    ``rate`` and ``width`` broadcast. Uses a power series when
    ``rate*width`` is small (the closed form cancels there) and the
    downward-stable recurrence otherwise.
    """
    rate, width = np.broadcast_arrays(np.asarray(rate, float), np.asarray(width, float))
    a = rate * width
    out = np.empty(rate.shape + (kmax + 1,))
    small = a < 2.0
    if small.any():
        asm, hsm = a[small], width[small]
        for k in range(kmax + 1):
            term = np.ones_like(asm)
            acc = term / (k + 1)
            for j in range(1, 40):
                term = term * (-asm) / j
                acc = acc + term / (j + k + 1)
            out[small, k] = hsm ** (k + 1) * acc
    big = ~small
    if big.any():
        r, h = rate[big], width[big]
        e = np.exp(-a[big])
        m = (1.0 - e) / r
        out[big, 0] = m
        for k in range(1, kmax + 1):
            m = (k * m - h**k * e) / r
            out[big, k] = m
    return out


def _laplace_panels(h, ratio=2.0):
    """Split intervals into quadratic panels ``(first node, from, to)`` and
    linear ones, keeping quadratic interpolation away from abrupt changes
    in step size where it would extrapolate."""
    n = h.size
    quad, lin = [], []
    ok = lambda x, y: 1.0 / ratio <= x / y <= ratio
    k = 0
    while k < n:
        if k + 1 < n and ok(h[k + 1], h[k]):
            quad.append((k, k, k + 2))
            k += 2
            continue
        if k >= 1 and ok(h[k - 1], h[k]):
            quad.append((k - 1, k, k + 1))
        else:
            lin.append(k)
        k += 1
    return np.array(quad, dtype=int).reshape(-1, 3), np.array(lin, dtype=int)


def laplace_weights(t, tau):
    """Weights ``omega`` with ``sum_k omega_k g(t_k) ~ int_{t_0}^{t_n} e^{-tau t} g dt``.

    ``g`` is replaced by its piecewise-quadratic interpolant over pairs of
    consecutive intervals of similar length (a lone interval borrows a
    neighbouring node, or falls back to linear next to a jump in step
    size) and the exponential is integrated exactly, so the rule stays
    accurate for any ``tau * dt``.
    """
    t = np.asarray(t, dtype=float)
    if t.size < 2:
        raise ValueError("need at least two time nodes")
    omega = np.zeros(t.size)
    panels, lin = _laplace_panels(np.diff(t))
    if lin.size:
        a, hl = t[lin], t[lin + 1] - t[lin]
        m = exp_moments(tau, hl, 1)
        e0 = np.exp(-tau * a)
        np.add.at(omega, lin, e0 * (m[:, 0] - m[:, 1] / hl))
        np.add.at(omega, lin + 1, e0 * m[:, 1] / hl)
    if not panels.size:
        return omega
    k0, ka, kb = panels.T
    a, b = t[ka], t[kb]
    m = exp_moments(tau, b - a, 2)
    e0 = np.exp(-tau * a)
    x = t[k0[:, None] + np.arange(3)] - a[:, None]
    for j in range(3):
        o0, o1 = x[:, (j + 1) % 3], x[:, (j + 2) % 3]
        den = (x[:, j] - o0) * (x[:, j] - o1)
        # l_j(y) = (y^2 - (o0+o1) y + o0 o1)/den integrated against e^{-tau y}
        val = e0 * (m[:, 2] - (o0 + o1) * m[:, 1] + o0 * o1 * m[:, 0]) / den
        np.add.at(omega, k0 + j, val)
    return omega
