"""Gradients, energies, carre du champ, entropy and Fisher information."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .errors import AtomicMeasure, GridMismatch
from .fields import DiscreteMeasure, EdgeFunction, GridFunction
from .graph import Grid

F_TOL = 1e-12
G_TOL = 1e-8


def _edge_derivative(u: np.ndarray, h: float) -> np.ndarray:
    n = u.size
    d = np.empty(n)
    if n == 2:
        d[:] = (u[1] - u[0]) / h
        return d
    d[1:-1] = (u[2:] - u[:-2]) / (2 * h)
    # written in differences so constants give exactly zero
    d[0] = (4 * (u[1] - u[0]) - (u[2] - u[0])) / (2 * h)
    d[-1] = (4 * (u[-1] - u[-2]) - (u[-1] - u[-3])) / (2 * h)
    return d


def gradient(f: GridFunction) -> EdgeFunction:
    """Derivative along each edge (tail to head direction).

    Centered differences inside edges, second-order one-sided differences
    at the two vertex ends (first order when an edge has a single cell).
    """
    grid = f.grid
    parts = tuple(
        _edge_derivative(f.values[idx], grid.h[k]) for k, idx in enumerate(grid.edge_nodes)
    )
    return EdgeFunction(grid, parts)


def gradient_matrix(grid: Grid) -> sp.csr_matrix:
    """Sparse operator with ``D @ f.values == gradient(f).flatten()``."""
    rows, cols, vals = [], [], []
    row0 = 0
    for k, idx in enumerate(grid.edge_nodes):
        n = idx.size
        h = grid.h[k]
        r = np.arange(n) + row0
        if n == 2:
            stencil = [(r, idx[0], -1 / h), (r, idx[1], 1 / h)]
        else:
            stencil = [
                (r[1:-1], idx[:-2], -0.5 / h),
                (r[1:-1], idx[2:], 0.5 / h),
                (r[:1], idx[:1], -1.5 / h),
                (r[:1], idx[1:2], 2.0 / h),
                (r[:1], idx[2:3], -0.5 / h),
                (r[-1:], idx[-1:], 1.5 / h),
                (r[-1:], idx[-2:-1], -2.0 / h),
                (r[-1:], idx[-3:-2], 0.5 / h),
            ]
        for rr, cc, v in stencil:
            rr = np.atleast_1d(rr)
            cc = np.broadcast_to(cc, rr.shape)
            rows.append(rr)
            cols.append(cc)
            vals.append(np.full(rr.size, v))
        row0 += n
    return sp.csr_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
        shape=(row0, grid.size),
    )


def gamma(f: GridFunction, g: GridFunction | None = None) -> EdgeFunction:
    """``Gamma(f, g) = grad f * grad g``; ``Gamma(f) = |grad f|^2``."""
    if g is None:
        df = gradient(f)
        return df * df
    if f.grid is not g.grid:
        raise GridMismatch("gamma needs functions on the same grid")
    return gradient(f) * gradient(g)


def dirichlet_energy(f: GridFunction) -> float:
    return gamma(f).integral()


def cheeger_energy(f: GridFunction) -> float:
    return 0.5 * dirichlet_energy(f)


def sup_gradient(f: GridFunction) -> float:
    return float(max(np.abs(p).max() for p in gradient(f).parts))


def _eta(r: np.ndarray) -> np.ndarray:
    out = np.zeros_like(r)
    pos = r > 0
    out[pos] = r[pos] * np.log(r[pos])
    return out


def entropy(mu: DiscreteMeasure) -> float:
    """``int f log f``, or ``+inf`` if the measure carries atoms."""
    if mu.has_atoms:
        return float("inf")
    return float(mu.grid.weights @ _eta(mu.density))


def entropy_delta(mu: DiscreteMeasure, delta: float) -> float:
    """``int log(f + delta) dmu`` for absolutely continuous ``mu``."""
    if mu.has_atoms:
        raise AtomicMeasure("regularized entropy needs a density")
    if not delta > 0:
        raise ValueError("delta must be positive")
    f = mu.density
    return float(mu.grid.weights @ (f * np.log(f + delta)))


def _psi(f: np.ndarray, g: np.ndarray, f_tol: float, g_tol: float) -> np.ndarray:
    out = np.zeros_like(f)
    pos = f > f_tol
    out[pos] = g[pos] ** 2 / f[pos]
    bad = (~pos) & (np.abs(g) > g_tol)
    out[bad] = np.inf
    return out


def fisher_information(mu: DiscreteMeasure, f_tol: float = F_TOL, g_tol: float = G_TOL) -> float:
    """Trapezoidal quadrature of ``|grad f|^2 / f`` with the zero-density branches."""
    if mu.has_atoms:
        return float("inf")
    grid = mu.grid
    rho = GridFunction(grid, mu.density)
    grad = gradient(rho)
    dens = EdgeFunction.from_nodal(rho)
    integrand = dens.combine(grad, lambda f, g: _psi(f, g, f_tol, g_tol))
    if any(np.isinf(p).any() for p in integrand.parts):
        return float("inf")
    return integrand.integral()


def fisher_via_sqrt(mu: DiscreteMeasure) -> float:
    """``4 E(sqrt f) = 8 Ch(sqrt f)``: an independent route to the Fisher information.

    With ``E = 2 Ch`` the integrand ``|grad f|^2 / f`` equals ``4 |grad sqrt f|^2``.
    """
    if mu.has_atoms:
        return float("inf")
    return 4.0 * dirichlet_energy(GridFunction(mu.grid, np.sqrt(mu.density)))


def lipschitz_constants(f: GridFunction) -> tuple[np.ndarray, float]:
    """Local slopes per node and the global Lipschitz constant.

    The local value is the largest difference quotient over the cells
    touching the node; the global value is the largest ``|f(x)-f(y)|/d(x,y)``
    over all node pairs.
    """
    grid = f.grid
    a, b, hc = grid.cells
    slope = np.abs(f.values[b] - f.values[a]) / hc
    local = np.zeros(grid.size)
    np.maximum.at(local, a, slope)
    np.maximum.at(local, b, slope)
    D = grid.distance_matrix
    diff = np.abs(f.values[:, None] - f.values[None, :])
    with np.errstate(divide="ignore", invalid="ignore"):
        q = np.where(D > 0, diff / D, 0.0)
    return local, float(q.max())


@dataclass(frozen=True)
class Functionals:
    dirichlet: float
    entropy: float
    fisher: float


def evaluate_functionals(mu: DiscreteMeasure) -> Functionals:
    dens = GridFunction(mu.grid, mu.density)
    return Functionals(dirichlet_energy(dens), entropy(mu), fisher_information(mu))


def distance_function(grid: Grid, vertex: int) -> GridFunction:
    """Nodal values of ``x -> d(x, vertex)``."""
    return GridFunction(grid, np.array(grid.distance_matrix[vertex]))
