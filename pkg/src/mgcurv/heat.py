"""Kirchhoff Laplacian on a grid, its spectrum, the heat kernel and semigroup.

The operator is the P1 stiffness matrix ``K`` divided by the lumped mass
``M`` (trapezoidal weights).  Interior rows are the usual second difference
``(2f_i - f_{i-1} - f_{i+1})/h^2``.  At a vertex the row reads
``sum_e (f_v - f_{e,1})/h_e`` divided by the vertex mass, which is the
discrete flux balance (continuity plus zero sum of outward derivatives).
``L = M^{-1} K`` is self-adjoint for the ``M`` inner product and
``exp(-tL)`` has nonnegative entries, so the discrete semigroup is Markov.
"""

from __future__ import annotations

import math
import threading
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import NonpositiveTime, SolverFailure
from .fields import DiscreteMeasure, GridFunction
from .graph import GraphPoint, Grid

DENSE_LIMIT = 5000


@dataclass(frozen=True, eq=False)
class KirchhoffLaplacian:
    grid: Grid
    stiffness: sp.csr_matrix
    mass: np.ndarray

    @property
    def matrix(self) -> sp.csr_matrix:
        """The operator ``M^{-1} K`` as a sparse matrix."""
        return sp.diags(1.0 / self.mass) @ self.stiffness

    def apply(self, f: GridFunction | np.ndarray) -> np.ndarray:
        vals = f.values if isinstance(f, GridFunction) else np.asarray(f, dtype=float)
        return (self.stiffness @ vals) / self.mass


def assemble_laplacian(grid: Grid) -> KirchhoffLaplacian:
    a, b, hc = grid.cells
    inv = 1.0 / hc
    rows = np.concatenate([a, b, a, b])
    cols = np.concatenate([a, b, b, a])
    vals = np.concatenate([inv, inv, -inv, -inv])
    K = sp.coo_matrix((vals, (rows, cols)), shape=(grid.size, grid.size)).tocsr()
    K.sum_duplicates()
    K.eliminate_zeros()
    return KirchhoffLaplacian(grid, K, np.array(grid.weights))


@dataclass(frozen=True, eq=False)
class SpectralDecomposition:
    """Eigenpairs of ``K phi = lambda M phi`` with ``Phi^T M Phi = I``."""

    grid: Grid
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray
    mass: np.ndarray
    residual: float

    @property
    def size(self) -> int:
        return self.eigenvalues.size

    @property
    def truncated(self) -> bool:
        return self.size < self.grid.size

    @property
    def lambda1(self) -> float:
        return float(self.eigenvalues[1])

    def tail_bound(self, t: float) -> float:
        """``exp(-lambda_m t)`` for the largest retained eigenvalue (0 if complete)."""
        if not self.truncated:
            return 0.0
        return math.exp(-float(self.eigenvalues[-1]) * t)


def eigendecompose(L: KirchhoffLaplacian, m: int | None = None, eig_tol: float = 1e-10) -> SpectralDecomposition:
    """Smallest ``m`` eigenpairs (all of them by default on small grids)."""
    n = L.grid.size
    if m is None:
        m = n if n < DENSE_LIMIT else min(n, 400)
    if not 1 <= m <= n:
        raise ValueError(f"m must be in [1, {n}]")
    d = 1.0 / np.sqrt(L.mass)
    S = sp.diags(d) @ L.stiffness @ sp.diags(d)
    if n < DENSE_LIMIT:
        lam, psi = scipy.linalg.eigh(S.toarray(), subset_by_index=(0, m - 1))
    else:
        lam, psi = spla.eigsh(S.tocsc(), k=m, sigma=-1e-8, which="LM")
        order = np.argsort(lam)
        lam, psi = lam[order], psi[:, order]
    resid = S @ psi - psi * lam
    scale = max(1.0, float(np.abs(lam).max()))
    res = float(np.abs(resid).max()) / scale
    if not res <= eig_tol:
        raise SolverFailure(f"eigen residual {res:.2e} exceeds {eig_tol:.1e}")
    lam = np.clip(lam, 0.0, None)
    lam[0] = 0.0
    phi = psi * d[:, None]
    # fix signs so the decomposition is reproducible
    pivots = np.argmax(np.abs(phi), axis=0)
    signs = np.sign(phi[pivots, np.arange(m)])
    signs[signs == 0] = 1.0
    phi = phi * signs
    for arr in (lam, phi):
        arr.setflags(write=False)
    return SpectralDecomposition(L.grid, lam, phi, np.array(L.mass), res)


@dataclass(eq=False)
class HeatKernelEvaluator:
    """Heat kernel ``p_t`` and semigroup ``P_t`` by spectral synthesis."""

    spectrum: SpectralDecomposition
    _cache: dict = field(default_factory=dict, repr=False)
    _lock: threading.Lock = field(default_factory=threading.Lock, repr=False)

    @classmethod
    def for_grid(cls, grid: Grid, eig_tol: float = 1e-10) -> "HeatKernelEvaluator":
        return cls(eigendecompose(assemble_laplacian(grid), eig_tol=eig_tol))

    @property
    def grid(self) -> Grid:
        return self.spectrum.grid

    def _factors(self, t: float) -> np.ndarray:
        key = float(t)
        cached = self._cache.get(key)
        if cached is None:
            cached = np.exp(-self.spectrum.eigenvalues * key)
            cached.setflags(write=False)
            with self._lock:
                self._cache.setdefault(key, cached)
        return cached

    def apply(self, values: np.ndarray, t: float) -> np.ndarray:
        """``P_t`` on nodal values (vector or matrix of column vectors)."""
        if t < 0:
            raise NonpositiveTime("t must be nonnegative")
        vals = np.asarray(values, dtype=float)
        if t == 0:
            return vals.copy()
        sd = self.spectrum
        phi = sd.eigenvectors
        weighted = vals * sd.mass if vals.ndim == 1 else vals * sd.mass[:, None]
        coeff = phi.T @ weighted
        fac = self._factors(t)
        coeff = coeff * fac if vals.ndim == 1 else coeff * fac[:, None]
        return phi @ coeff

    def kernel_matrix(self, t: float) -> np.ndarray:
        """Nodal kernel ``p_t(x_i, x_j)``."""
        if t <= 0:
            raise NonpositiveTime("t must be positive")
        phi = self.spectrum.eigenvectors
        return (phi * self._factors(t)) @ phi.T

    def operator(self, t: float) -> np.ndarray:
        """Dense matrix of ``P_t`` acting on nodal values."""
        if t == 0:
            return np.eye(self.grid.size)
        return self.kernel_matrix(t) * self.spectrum.mass[None, :]

    def eigen_at(self, p: GraphPoint) -> np.ndarray:
        i, j, w = self.grid.locate(p)
        phi = self.spectrum.eigenvectors
        return (1.0 - w) * phi[i] + w * phi[j]

    def column(self, t: float, p: GraphPoint) -> np.ndarray:
        """Nodal values of ``y -> p_t(p, y)``."""
        if t <= 0:
            raise NonpositiveTime("t must be positive")
        return self.spectrum.eigenvectors @ (self._factors(t) * self.eigen_at(p))


def heat_kernel(H: HeatKernelEvaluator, t: float, x: GraphPoint, y: GraphPoint) -> float:
    if not t > 0:
        raise NonpositiveTime("heat kernel needs t > 0")
    return float(np.sum(H._factors(t) * H.eigen_at(x) * H.eigen_at(y)))


def apply_Pt(H: HeatKernelEvaluator, f: GridFunction, t: float) -> GridFunction:
    return GridFunction(f.grid, H.apply(f.values, t))


def apply_Ht(H: HeatKernelEvaluator, mu: DiscreteMeasure, t: float) -> DiscreteMeasure:
    """Dual semigroup on measures; atoms are carried by kernel columns."""
    if t < 0:
        raise NonpositiveTime("t must be nonnegative")
    if t == 0:
        return mu
    dens = mu.density + mu.atom_density() if mu.has_atoms else mu.density
    out = H.apply(dens, t)
    # round-off can leave entries at -1e-17; the exact semigroup is positive
    np.maximum(out, 0.0, out=out)
    return DiscreteMeasure(mu.grid, out)


def gaussian_bound_constant(H: HeatKernelEvaluator, times, points=None) -> float:
    """Smallest ``C`` with ``p_t(x,y) <= C t^{-1/2} exp(-d^2/4t)`` on the samples.

    Reported only; the constant is not asserted against any value.
    """
    grid = H.grid
    D = grid.distance_matrix
    idx = np.arange(grid.size) if points is None else np.asarray(points)
    best = 0.0
    for t in times:
        P = H.kernel_matrix(t)[np.ix_(idx, np.arange(grid.size))]
        g = (2 * np.pi * t) ** -0.5 * np.exp(-D[idx] ** 2 / (4 * t))
        with np.errstate(divide="ignore", invalid="ignore"):
            ratio = np.where(g > 1e-300, P / g, 0.0)
        best = max(best, float(ratio.max()))
    return best
