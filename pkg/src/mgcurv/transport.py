"""Wasserstein-2 transport on metric graphs.

``w2`` solves the discrete transport problem exactly on the union of the
supports (grid nodes carrying density mass plus point atoms) with cost
``d^2``.  For absolutely continuous measures on a path graph the exact
quantile formula is available as well, and for smooth positive density
curves the metric speed can be read off the continuity equation.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from . import _backend
from .errors import AtomicMeasure, GridMismatch, MassMismatch, SolverFailure
from .fields import DiscreteMeasure, GridFunction
from .graph import GraphPoint, Grid, geodesic_point, point_distances

MASS_TOL = 1e-9


@dataclass(frozen=True, eq=False)
class TransportPlan:
    source: tuple[GraphPoint, ...]
    target: tuple[GraphPoint, ...]
    source_mass: np.ndarray
    target_mass: np.ndarray
    coupling: np.ndarray
    cost: float
    u: np.ndarray
    v: np.ndarray

    def duality_gap(self) -> float:
        return float(self.source_mass @ self.u + self.target_mass @ self.v - self.cost)

    def entries(self):
        """Positive entries as (source point, target point, mass)."""
        rows, cols = np.nonzero(self.coupling > 0)
        for i, j in zip(rows, cols):
            yield self.source[i], self.target[j], float(self.coupling[i, j])


def solve_transport(a: np.ndarray, b: np.ndarray, cost: np.ndarray):
    """Exact optimal coupling for a dense cost matrix.

    Returns ``(plan, u, v)``; see :mod:`mgcurv._kernels_py` for the method.
    """
    try:
        plan, u, v, _ = _backend.transport_simplex(a, b, cost)
    except RuntimeError as exc:
        raise SolverFailure(str(exc)) from exc
    return plan, u, v


def w2(mu: DiscreteMeasure, nu: DiscreteMeasure, cutoff: float = 0.0) -> tuple[float, TransportPlan]:
    """Wasserstein-2 distance and an optimal plan."""
    if mu.grid.graph is not nu.grid.graph:
        raise GridMismatch("measures live on different graphs")
    xs, a = mu.support(cutoff)
    ys, b = nu.support(cutoff)
    ma, mb = a.sum(), b.sum()
    if abs(ma - mb) > MASS_TOL * max(1.0, ma):
        raise MassMismatch(f"total masses differ: {ma!r} vs {mb!r}")
    b = b * (ma / mb)
    D = point_distances(mu.grid.graph, xs, ys)
    C = D * D
    plan, u, v = solve_transport(a, b, C)
    cost = float(np.sum(plan * C))
    tp = TransportPlan(tuple(xs), tuple(ys), a, b, plan, cost, u, v)
    return float(np.sqrt(max(cost, 0.0))), tp


def wasserstein_geodesic(
    mu0: DiscreteMeasure,
    mu1: DiscreteMeasure,
    s: float,
    plan: TransportPlan | None = None,
) -> DiscreteMeasure:
    """Displacement interpolation along an optimal plan."""
    if not 0.0 <= s <= 1.0:
        raise ValueError("s must lie in [0, 1]")
    if s == 0.0:
        return mu0
    if s == 1.0:
        return mu1
    if plan is None:
        _, plan = w2(mu0, mu1)
    G = mu0.grid.graph
    entries = list(plan.entries())
    if all(x == y for x, y, _ in entries):
        return mu0
    points = [geodesic_point(G, x, y, s) for x, y, _ in entries]
    return DiscreteMeasure.from_atoms(mu0.grid, points, [m for _, _, m in entries])


# -- exact one-dimensional transport -----------------------------------------

@lru_cache(maxsize=32)
def _path_layout(grid: Grid) -> tuple[np.ndarray, np.ndarray]:
    """Node order and arclength positions for a grid on a path graph."""
    G = grid.graph
    if not G.is_path_graph():
        raise ValueError("graph is not a path")
    start = next(v for v in range(G.num_vertices) if G.degree[v] <= 1)
    order = [start]
    pos = [0.0]
    used = set()
    v = start
    while len(used) < G.num_edges:
        k = next(k for k in G.adjacency[v] if k not in used)
        used.add(k)
        idx = grid.edge_nodes[k]
        if G.edges[k].tail != v:
            idx = idx[::-1]
        for node in idx[1:]:
            order.append(int(node))
            pos.append(pos[-1] + grid.h[k])
        v = G.edges[k].head if G.edges[k].tail == v else G.edges[k].tail
    return np.array(order), np.array(pos)


def _quantile_tables(x: np.ndarray, rho: np.ndarray):
    h = np.diff(x)
    cell = 0.5 * h * (rho[:-1] + rho[1:])
    F = np.concatenate([[0.0], np.cumsum(cell)])
    return h, F


def _quantile(u: np.ndarray, x, rho, h, F) -> np.ndarray:
    k = np.clip(np.searchsorted(F, u, side="right") - 1, 0, h.size - 1)
    c = np.clip(u - F[k], 0.0, None)
    A = (rho[k + 1] - rho[k]) / (2 * h[k])
    B = rho[k]
    disc = np.sqrt(np.maximum(B * B + 4 * A * c, 0.0))
    denom = B + disc
    with np.errstate(divide="ignore", invalid="ignore"):
        tau = np.where(denom > 0, 2 * c / denom, 0.0)
    return x[k] + np.minimum(tau, h[k])


_GL_X, _GL_W = np.polynomial.legendre.leggauss(8)


def w2_quantile(mu: DiscreteMeasure, nu: DiscreteMeasure) -> float:
    """Exact W2 between piecewise-linear densities on a path graph.

    Uses ``W2^2 = int_0^1 |F^{-1}(u) - G^{-1}(u)|^2 du`` with the quantile
    functions of the piecewise-quadratic distribution functions, integrated
    by Gauss-Legendre between the merged breakpoints.
    """
    if mu.has_atoms or nu.has_atoms:
        raise AtomicMeasure("quantile transport needs densities")
    if mu.grid is not nu.grid:
        raise GridMismatch("measures live on different grids")
    order, x = _path_layout(mu.grid)
    r0 = mu.density[order]
    r1 = nu.density[order]
    h0, F0 = _quantile_tables(x, r0)
    h1, F1 = _quantile_tables(x, r1)
    total = F0[-1]
    if abs(total - F1[-1]) > MASS_TOL * max(1.0, total):
        raise MassMismatch("total masses differ")
    F1 = F1 * (total / F1[-1])
    r1 = r1 * (total / nu.total_mass())
    br = np.unique(np.concatenate([F0, F1]))
    br = br[(br >= 0) & (br <= total)]
    lo, hi = br[:-1], br[1:]
    mid = 0.5 * (lo + hi)
    half = 0.5 * (hi - lo)
    u = mid[:, None] + half[:, None] * _GL_X[None, :]
    q0 = _quantile(u.ravel(), x, r0, h0, F0).reshape(u.shape)
    q1 = _quantile(u.ravel(), x, r1, h1, F1).reshape(u.shape)
    val = float(np.sum(half[:, None] * _GL_W[None, :] * (q0 - q1) ** 2))
    return float(np.sqrt(max(val, 0.0)))


def displacement_interpolation_1d(mu0: DiscreteMeasure, mu1: DiscreteMeasure, s: float) -> DiscreteMeasure:
    """Density of the W2 geodesic between two densities on a path graph.

    The interpolated quantile function ``(1-s)F0^{-1} + s F1^{-1}`` is
    inverted at the grid nodes and the resulting distribution function is
    differentiated back to a nodal density by lumped projection.
    """
    if s in (0.0, 1.0):
        return mu0 if s == 0.0 else mu1
    order, x = _path_layout(mu0.grid)
    r0 = mu0.density[order]
    r1 = mu1.density[order]
    h0, F0 = _quantile_tables(x, r0)
    h1, F1 = _quantile_tables(x, r1)
    u = np.linspace(0.0, F0[-1], 20 * x.size + 1)
    q = (1 - s) * _quantile(u, x, r0, h0, F0) + s * _quantile(u, x, r1, h1, F1)
    q = np.maximum.accumulate(q)
    # distribution function of mu_s on a refined copy of each cell
    sub = 8
    frac = np.linspace(0.0, 1.0, sub + 1)
    hx = np.diff(x)
    xf = x[:-1, None] + hx[:, None] * frac[None, :]
    Ff = np.interp(xf, q, u, left=0.0, right=F0[-1])
    Fnode = np.concatenate([Ff[:, 0], Ff[-1:, -1]])
    avg = np.sum(0.5 * (Ff[:, 1:] + Ff[:, :-1]), axis=1) / sub
    # node mass = int hat_i dF, split cell by cell
    node = np.zeros(x.size)
    node[:-1] += avg - Fnode[:-1]
    node[1:] += Fnode[1:] - avg
    dens = np.zeros(mu0.grid.size)
    dens[order] = np.maximum(node, 0.0) / mu0.grid.weights[order]
    return DiscreteMeasure(mu0.grid, dens)


# -- curves ---------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class MeasureCurve:
    times: np.ndarray
    measures: tuple[DiscreteMeasure, ...]

    def __post_init__(self):
        t = np.asarray(self.times, dtype=float)
        if t.ndim != 1 or t.size != len(self.measures):
            raise ValueError("need one time per measure")
        if np.any(np.diff(t) <= 0):
            raise ValueError("times must increase")
        object.__setattr__(self, "times", t)
        object.__setattr__(self, "measures", tuple(self.measures))

    def __len__(self) -> int:
        return len(self.measures)


def flux_speed(mu0: DiscreteMeasure, mu1: DiscreteMeasure, dt: float) -> float:
    """Metric speed from the continuity equation between two densities.

    Finds the cell fluxes ``J`` of least kinetic energy
    ``sum_c h_c J_c^2 / rho_c`` that move the node masses of ``mu0`` to those
    of ``mu1`` in time ``dt`` and returns the square root of that energy.
    On a tree the flux is unique; cycles are resolved by the minimisation.
    """
    if mu0.has_atoms or mu1.has_atoms:
        raise AtomicMeasure("flux speed needs densities")
    grid = mu0.grid
    a, b, hc = grid.cells
    rho = 0.5 * (mu0.density + mu1.density)
    rbar = 0.5 * (rho[a] + rho[b])
    if np.any(rbar <= 0):
        return float("inf")
    mdot = (mu1.node_masses() - mu0.node_masses()) / dt
    cond = rbar / hc
    n = grid.size
    rows = np.concatenate([a, b, a, b])
    cols = np.concatenate([a, b, b, a])
    vals = np.concatenate([cond, cond, -cond, -cond])
    Lw = sp.coo_matrix((vals, (rows, cols)), shape=(n, n)).tocsc()
    rhs = -(mdot - mdot.mean())
    p = np.zeros(n)
    p[1:] = spla.spsolve(Lw[1:, 1:], rhs[1:])
    energy = float(-(mdot @ p))
    return float(np.sqrt(max(energy, 0.0)))


def metric_derivative(curve: MeasureCurve, i: int, method: str = "ot") -> float:
    """Forward-difference speed ``W2(mu_i, mu_{i+1}) / (s_{i+1} - s_i)``.

    ``method`` selects how the distance is computed: ``"ot"`` (discrete
    transport), ``"quantile"`` (exact, path graphs) or ``"flux"``
    (continuity equation, densities).
    """
    dt = curve.times[i + 1] - curve.times[i]
    mu, nu = curve.measures[i], curve.measures[i + 1]
    if method == "ot":
        return w2(mu, nu)[0] / dt
    if method == "quantile":
        return w2_quantile(mu, nu) / dt
    if method == "flux":
        return flux_speed(mu, nu, dt)
    raise ValueError(f"unknown method {method!r}")


def speeds(curve: MeasureCurve, method: str = "ot") -> np.ndarray:
    return np.array([metric_derivative(curve, i, method) for i in range(len(curve) - 1)])


def action(curve: MeasureCurve, method: str = "ot") -> float:
    """Riemann sum of ``|mu'|^2`` with forward-difference speeds."""
    sp_ = speeds(curve, method)
    return float(np.sum(sp_**2 * np.diff(curve.times)))


def length(curve: MeasureCurve, method: str = "ot") -> float:
    sp_ = speeds(curve, method)
    return float(np.sum(sp_ * np.diff(curve.times)))


# -- Hopf-Lax -------------------------------------------------------------------

def hopf_lax(phi: GridFunction, s: float, cost: str = "quadratic") -> GridFunction:
    """Infimal convolution ``Q_s phi(x) = min_y phi(y) + c_s(x, y)`` over grid nodes.

    ``cost="quadratic"`` uses ``d^2 / (2s)``; ``cost="linear"`` uses
    ``d / (2s)``.
    """
    if not s > 0:
        raise ValueError("s must be positive")
    power = {"quadratic": 2, "linear": 1}[cost]
    D = phi.grid.distance_matrix
    q = _backend.hopf_lax_min(phi.values, D, 1.0 / (2.0 * s), power)
    return GridFunction(phi.grid, q)
