"""Modal Crank-Nicolson solver for the heat equation on a spherical shell.

Each Legendre mode ``u_l(r, t)`` obeys

    u_t = u_rr + (2/r) u_r - l(l+1) u / r^2,   a < r < b,
    u_r(a) = 0,   u_r(b) = f_l(t),   u(., 0) = 0.

Space is discretised in conservative flux form on a uniform node set: node
``i`` owns the shell between the neighbouring midpoints (half shells at
the two ends), so with ``W_i`` the exact volume of that shell over ``4 pi``

    W_i du_i/dt = F_{i+1/2} - F_{i-1/2} - l(l+1) W_i u_i / r_i^2,
    F_{i+1/2} = r_{i+1/2}^2 (u_{i+1} - u_i) / h,

and the Neumann data enter as the boundary fluxes ``b^2 f`` and ``0``. The
mode-0 heat content ``4 pi sum W_i u_i`` then changes by exactly
``4 pi b^2 f dt`` per step. All modes are advanced together through one
symmetric positive definite tridiagonal solve.
"""

from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import lapack

from .geometry import sphere_rule, legendre_table
from .quadrature import laplace_weights
from .wavefield import flux_on_boundary


@dataclass(frozen=True)
class RadialGrid:
    r_nodes: np.ndarray

    def __post_init__(self):
        r = np.asarray(self.r_nodes, dtype=float)
        if r.size < 33:
            raise ValueError(f"radial grid needs at least 33 nodes, got {r.size}")
        d = np.diff(r)
        if np.any(d <= 0):
            raise ValueError("radial nodes must be strictly increasing")
        if np.ptp(d) > 1e-9 * d.mean():
            raise ValueError("radial nodes must be uniformly spaced")
        object.__setattr__(self, "r_nodes", r)

    @classmethod
    def uniform(cls, a, b, n):
        r = np.linspace(a, b, n)
        r[0], r[-1] = a, b
        return cls(r)

    @property
    def h(self):
        return (self.r_nodes[-1] - self.r_nodes[0]) / (self.r_nodes.size - 1)

    @property
    def size(self):
        return self.r_nodes.size

    @property
    def midpoints(self):
        r = self.r_nodes
        return 0.5 * (r[1:] + r[:-1])

    @property
    def weights(self):
        """``W_i``: volume of the control shell of node ``i`` divided by ``4 pi``."""
        r = self.r_nodes
        edges = np.concatenate([r[:1], self.midpoints, r[-1:]])
        return (edges[1:] ** 3 - edges[:-1] ** 3) / 3.0


@dataclass(frozen=True)
class TimeGrid:
    t_nodes: np.ndarray
    dt_max: float

    def __post_init__(self):
        t = np.asarray(self.t_nodes, dtype=float)
        if t[0] != 0.0:
            raise ValueError("time grid must start at 0")
        dt = np.diff(t)
        if np.any(dt <= 0):
            raise ValueError("time nodes must be strictly increasing")
        object.__setattr__(self, "t_nodes", t)

    @property
    def T_final(self):
        return self.t_nodes[-1]

    @classmethod
    def for_probe(cls, w, g, dt_max, fine_steps=200, tau_max=None, alpha=0.05,
                  growth=1.1):
        """Graded grid for the boundary flux of ``w`` on ``g``.

        Before the first arrival the flux vanishes, so a single step covers
        it. Across the passage window the grid is piecewise uniform with
        nodes at every time the flux envelope can kink and a step no larger
        than ``dt_max``, ``window/fine_steps`` or ``alpha/tau_max``; after
        it, steps grow geometrically back to ``dt_max``.
        """
        T, lam, eta = w.T_final, w.lam, w.eta
        near, far = g.boundary_distance_range()
        t0 = min(lam * (near - eta), T)
        t1 = min(lam * (far + eta), T)
        fine = min(dt_max, (lam * (far - near + 2 * eta)) / fine_steps)
        if tau_max is not None:
            fine = min(fine, alpha / tau_max)
        breaks = lam * np.array([near, near + eta, far - eta, far])
        breaks = np.unique(np.concatenate([[t0, t1], breaks[(breaks > t0) & (breaks < t1)]]))
        nodes = [np.zeros(1)]
        for lo, hi in zip(breaks[:-1], breaks[1:]):
            m = max(1, int(np.ceil((hi - lo) / fine - 1e-9)))
            nodes.append(np.linspace(lo, hi, m + 1))
        tail = [t1]
        dt = fine
        while tail[-1] < T:
            dt = min(dt * growth, dt_max)
            tail.append(min(tail[-1] + dt, T))
        if len(tail) > 2 and T - tail[-2] < 0.25 * dt:
            tail.pop(-2)
        nodes.append(np.asarray(tail))
        t = np.unique(np.concatenate(nodes))
        return cls(t, dt_max)


@dataclass
class ModalHeatHistory:
    """Time series of one Legendre mode.

    ``values[k, i] = u_l(r_i, t_k)`` when a full history was requested,
    otherwise only the outer-boundary trace and the final slice are kept.
    """

    l: int
    times: np.ndarray
    trace: np.ndarray
    final: np.ndarray
    values: np.ndarray = None

    def __post_init__(self):
        if self.values is not None and np.any(self.values[0] != 0):
            raise ValueError("heat history must start from zero")


@dataclass
class HeatSolution:
    """All modes of one heat solve plus on-the-fly Laplace transforms.

    ``transforms[j, l, i] = int_0^T e^{-taus[j] t} u_l(r_i, t) dt``.
    """

    grid: RadialGrid
    times: np.ndarray
    trace: np.ndarray
    final: np.ndarray
    taus: np.ndarray
    transforms: np.ndarray
    values: np.ndarray = field(default=None, repr=False)

    @property
    def max_degree(self):
        return self.final.shape[0] - 1

    def history(self, l):
        vals = None if self.values is None else self.values[:, l, :]
        return ModalHeatHistory(l, self.times, self.trace[l], self.final[l], vals)

    def transform(self, tau):
        j = np.flatnonzero(np.isclose(self.taus, tau, rtol=1e-14, atol=0))
        if j.size == 0:
            raise KeyError(f"no transform accumulated for tau={tau}")
        return self.transforms[j[0]]


def mode_flux_history(w, g, max_degree, times, n=16):
    """``f_l(t_k)``: Legendre coefficients of the boundary flux at each time.

    At a fixed time the flux is supported on the band of the sphere whose
    distance from the source centre lies in ``[rho - eta, rho + eta]`` and
    kinks at distance ``rho``; the band is integrated with Gauss panels
    broken there.
    """
    r, z = g.r_omega, g.source.center_z
    scale = (2.0 * np.arange(max_degree + 1) + 1.0) / 2.0
    out = np.zeros((len(times), max_degree + 1))
    for k, t in enumerate(times):
        rho = t / w.lam
        mu, wt = sphere_rule(r, z, max_degree, kinks=(rho,), n=n,
                             s_range=(rho - w.eta, rho + w.eta))
        if mu.size == 0:
            continue
        vals = flux_on_boundary(w, g, mu, t)
        out[k] = legendre_table(max_degree, mu) @ (vals * wt) * scale
    return out


def _mode_operator(grid, max_degree):
    """Diagonal and off-diagonal of the symmetric stiffness ``K`` for each mode."""
    r, h = grid.r_nodes, grid.h
    c = grid.midpoints**2 / h
    W = grid.weights
    base = np.zeros(grid.size)
    base[:-1] -= c
    base[1:] -= c
    ll = np.arange(max_degree + 1) * (np.arange(max_degree + 1) + 1.0)
    diag = base[None, :] - ll[:, None] * (W / r**2)[None, :]
    return diag, c


def _apply(diag, off, u):
    out = diag * u
    out[..., :-1] += off * u[..., 1:]
    out[..., 1:] += off * u[..., :-1]
    return out


class _Stepper:
    """Cached factorisations of ``W/dt - K/2`` keyed by step size."""

    def __init__(self, grid, max_degree):
        self.grid = grid
        self.W = grid.weights
        self.diag, self.off = _mode_operator(grid, max_degree)
        self.nmodes = max_degree + 1
        self._cache = {}

    def factor(self, dt):
        key = float(dt)
        if key not in self._cache:
            d = (self.W[None, :] / dt - 0.5 * self.diag).ravel()
            e = np.tile(np.append(-0.5 * self.off, 0.0), self.nmodes)[:-1]
            # decouple consecutive modes in the stacked system
            d, e, info = lapack.dpttrf(d, e)
            if info != 0:
                raise ArithmeticError(f"dpttrf failed with info={info}")
            if len(self._cache) > 64:
                self._cache.clear()
            self._cache[key] = (d, e)
        return self._cache[key]

    def step(self, u, f_now, f_next, dt, source=None):
        rhs = self.W * u / dt + 0.5 * _apply(self.diag, self.off, u)
        rhs[:, -1] += self.grid.r_nodes[-1] ** 2 * 0.5 * (f_now + f_next)
        if source is not None:
            rhs += self.W * 0.5 * (source[0] + source[1])
        d, e = self.factor(dt)
        x, info = lapack.dpttrs(d, e, rhs.ravel())
        if info != 0:
            raise ArithmeticError(f"dpttrs failed with info={info}")
        return x.reshape(u.shape)


def step_mode(l, grid, u_prev, f_now, f_next, dt, source=None):
    """One Crank-Nicolson step of mode ``l``.

    ``source`` is an optional pair of nodal source vectors at the two time
    levels (used for manufactured-solution checks).
    """
    u_prev = np.asarray(u_prev, dtype=float)
    if u_prev.shape != (grid.size,):
        raise ValueError(f"state has shape {u_prev.shape}, grid has {grid.size} nodes")
    stepper = _Stepper(grid, l)
    u = np.zeros((l + 1, grid.size))
    u[l] = u_prev
    src = None
    if source is not None:
        src = [np.zeros_like(u), np.zeros_like(u)]
        src[0][l], src[1][l] = source
    fn = np.zeros(l + 1)
    fx = np.zeros(l + 1)
    fn[l], fx[l] = f_now, f_next
    return stepper.step(u, fn, fx, dt, src)[l]


def solve_all_modes(grid, times, flux, taus=(), store_history=False, chunk=256):
    """Advance every mode through ``times`` with boundary data ``flux[k, l]``.

    Laplace transforms for each entry of ``taus`` accumulate as the solve
    proceeds using the piecewise-quadratic weights of
    :func:`enclosure.quadrature.laplace_weights`, so the full history is
    only kept when ``store_history`` is set.
    """
    times = np.asarray(times, dtype=float)
    flux = np.asarray(flux, dtype=float)
    nt, nmodes = flux.shape
    if nt != times.size:
        raise ValueError("flux rows must match time nodes")
    taus = np.atleast_1d(np.asarray(taus, dtype=float))
    omega = np.array([laplace_weights(times, tau) for tau in taus]).reshape(taus.size, nt)
    stepper = _Stepper(grid, nmodes - 1)
    u = np.zeros((nmodes, grid.size))
    trace = np.zeros((nmodes, nt))
    acc = np.zeros((taus.size, nmodes * grid.size))
    hist = np.zeros((nt, nmodes, grid.size)) if store_history else None
    buf = np.zeros((chunk, nmodes * grid.size))
    start = 0
    # the initial state is zero, so node 0 contributes nothing
    for k in range(1, nt):
        u = stepper.step(u, flux[k - 1], flux[k], times[k] - times[k - 1])
        trace[:, k] = u[:, -1]
        if store_history:
            hist[k] = u
        buf[(k - 1) % chunk] = u.ravel()
        if k % chunk == 0 or k == nt - 1:
            rows = (k - 1) % chunk + 1
            if taus.size:
                acc += omega[:, start + 1:start + 1 + rows] @ buf[:rows]
            start += rows
    return HeatSolution(grid, times, trace, u, taus,
                        acc.reshape(taus.size, nmodes, grid.size), hist)
