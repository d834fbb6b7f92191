"""Grid functions, edgewise functions and discrete measures."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Iterable, Sequence

import numpy as np
import scipy.sparse as sp

from .errors import GridMismatch
from .graph import GraphPoint, Grid


def _same_grid(a: Grid, b: Grid) -> None:
    if a is not b:
        raise GridMismatch("objects live on different grids")


@dataclass(frozen=True, eq=False)
class GridFunction:
    """Continuous piecewise-linear function given by its nodal values."""

    grid: Grid
    values: np.ndarray

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=float)
        if vals.shape != (self.grid.size,):
            raise GridMismatch(f"expected {self.grid.size} values, got {vals.shape}")
        object.__setattr__(self, "values", vals)

    @classmethod
    def from_callable(cls, grid: Grid, fn: Callable[[int, float], float]) -> "GridFunction":
        """Sample ``fn(edge, s)`` at every node."""
        return cls(grid, grid.sample(fn))

    @classmethod
    def constant(cls, grid: Grid, c: float) -> "GridFunction":
        return cls(grid, np.full(grid.size, float(c)))

    def __call__(self, p: GraphPoint) -> float:
        return self.grid.interpolate(self.values, p)

    def _binary(self, other, op):
        if isinstance(other, GridFunction):
            _same_grid(self.grid, other.grid)
            other = other.values
        return GridFunction(self.grid, op(self.values, other))

    def __add__(self, other):
        return self._binary(other, np.add)

    __radd__ = __add__

    def __sub__(self, other):
        return self._binary(other, np.subtract)

    def __mul__(self, other):
        return self._binary(other, np.multiply)

    __rmul__ = __mul__

    def __neg__(self):
        return GridFunction(self.grid, -self.values)

    def integral(self) -> float:
        return float(self.grid.weights @ self.values)


@dataclass(frozen=True, eq=False)
class EdgeFunction:
    """Function on the disjoint union of closed edges.

    ``parts[k]`` holds the ``n_k`` nodal samples of edge ``k``; vertex values
    may differ between incident edges.  Gradients and carre du champ values
    live here.
    """

    grid: Grid
    parts: tuple[np.ndarray, ...]

    @classmethod
    def from_nodal(cls, f: GridFunction | np.ndarray, grid: Grid | None = None) -> "EdgeFunction":
        if isinstance(f, GridFunction):
            grid, vals = f.grid, f.values
        else:
            vals = np.asarray(f, dtype=float)
        return cls(grid, tuple(vals[idx] for idx in grid.edge_nodes))

    def map(self, fn: Callable[[np.ndarray], np.ndarray]) -> "EdgeFunction":
        return EdgeFunction(self.grid, tuple(fn(p) for p in self.parts))

    def combine(self, other: "EdgeFunction", fn) -> "EdgeFunction":
        _same_grid(self.grid, other.grid)
        return EdgeFunction(self.grid, tuple(fn(a, b) for a, b in zip(self.parts, other.parts)))

    def __mul__(self, other):
        if isinstance(other, EdgeFunction):
            return self.combine(other, np.multiply)
        return self.map(lambda p: p * other)

    __rmul__ = __mul__

    def __add__(self, other):
        if isinstance(other, EdgeFunction):
            return self.combine(other, np.add)
        return self.map(lambda p: p + other)

    def __sub__(self, other):
        if isinstance(other, EdgeFunction):
            return self.combine(other, np.subtract)
        return self.map(lambda p: p - other)

    def max(self) -> float:
        return float(max(p.max() for p in self.parts))

    def min(self) -> float:
        return float(min(p.min() for p in self.parts))

    def integral(self) -> float:
        """Trapezoidal rule edge by edge."""
        total = 0.0
        for k, p in enumerate(self.parts):
            total += self.grid.h[k] * (p.sum() - 0.5 * (p[0] + p[-1]))
        return float(total)

    def to_nodal(self) -> np.ndarray:
        """Project to nodes; vertex values become the mass-weighted average.

        Each incident edge owns half a cell at the vertex, so the average is
        weighted by those half-cell lengths.
        """
        grid = self.grid
        out = np.zeros(grid.size)
        acc = np.zeros(grid.num_vertices)
        for k, (idx, p) in enumerate(zip(grid.edge_nodes, self.parts)):
            out[idx[1:-1]] = p[1:-1]
            w = 0.5 * grid.h[k]
            acc[idx[0]] += w
            acc[idx[-1]] += w
            out[idx[0]] += w * p[0]
            out[idx[-1]] += w * p[-1]
        out[: grid.num_vertices] /= acc
        return out

    def flatten(self) -> np.ndarray:
        return np.concatenate(self.parts)


def nodal_projection_matrix(grid: Grid) -> sp.csr_matrix:
    """Sparse operator with ``A @ e.flatten() == e.to_nodal()``."""
    rows, cols, vals = [], [], []
    acc = np.zeros(grid.num_vertices)
    col0 = 0
    for k, idx in enumerate(grid.edge_nodes):
        acc[idx[0]] += 0.5 * grid.h[k]
        acc[idx[-1]] += 0.5 * grid.h[k]
    for k, idx in enumerate(grid.edge_nodes):
        n = idx.size
        w = 0.5 * grid.h[k]
        rows += [idx[1:-1], idx[:1], idx[-1:]]
        cols += [np.arange(1, n - 1) + col0, [col0], [col0 + n - 1]]
        vals += [np.ones(n - 2), [w / acc[idx[0]]], [w / acc[idx[-1]]]]
        col0 += n
    return sp.csr_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
        shape=(grid.size, col0),
    )


@dataclass(frozen=True, eq=False)
class DiscreteMeasure:
    """Finite nonnegative measure: nodal density plus point atoms.

    The absolutely continuous part has the piecewise-linear density
    ``density`` (nodal values, lumped quadrature); ``atoms`` holds point
    masses at arbitrary graph points.
    """

    grid: Grid
    density: np.ndarray
    atoms: tuple[tuple[GraphPoint, float], ...] = ()

    def __post_init__(self):
        dens = np.asarray(self.density, dtype=float)
        if dens.shape != (self.grid.size,):
            raise GridMismatch(f"expected {self.grid.size} density values, got {dens.shape}")
        if np.any(dens < 0) or not np.all(np.isfinite(dens)):
            raise ValueError("density must be finite and nonnegative")
        atoms = tuple((p, float(m)) for p, m in self.atoms if m != 0.0)
        if any(m < 0 for _, m in atoms):
            raise ValueError("atom masses must be nonnegative")
        object.__setattr__(self, "density", dens)
        object.__setattr__(self, "atoms", atoms)

    # -- constructors ------------------------------------------------------
    @classmethod
    def from_density(cls, grid: Grid, density, normalize: bool = False) -> "DiscreteMeasure":
        if isinstance(density, GridFunction):
            density = density.values
        dens = np.asarray(density, dtype=float)
        if normalize:
            dens = dens / float(grid.weights @ dens)
        return cls(grid, dens)

    @classmethod
    def uniform(cls, grid: Grid) -> "DiscreteMeasure":
        return cls(grid, np.full(grid.size, 1.0 / grid.graph.total_length))

    @classmethod
    def dirac(cls, grid: Grid, p: GraphPoint, mass: float = 1.0) -> "DiscreteMeasure":
        return cls(grid, np.zeros(grid.size), ((p, mass),))

    @classmethod
    def from_atoms(cls, grid: Grid, points: Sequence[GraphPoint], masses: Iterable[float]) -> "DiscreteMeasure":
        merged: dict[GraphPoint, float] = {}
        order: list[GraphPoint] = []
        for p, m in zip(points, masses):
            if p not in merged:
                merged[p] = 0.0
                order.append(p)
            merged[p] += float(m)
        return cls(grid, np.zeros(grid.size), tuple((p, merged[p]) for p in order))

    @classmethod
    def mixture(cls, weights: Sequence[float], measures: Sequence["DiscreteMeasure"]) -> "DiscreteMeasure":
        grid = measures[0].grid
        dens = np.zeros(grid.size)
        pts, masses = [], []
        for w, mu in zip(weights, measures):
            _same_grid(grid, mu.grid)
            if w == 0.0:
                continue
            dens += w * mu.density
            for p, m in mu.atoms:
                pts.append(p)
                masses.append(w * m)
        atoms = cls.from_atoms(grid, pts, masses).atoms
        return cls(grid, dens, atoms)

    # -- queries -------------------------------------------------------------
    @property
    def has_atoms(self) -> bool:
        return len(self.atoms) > 0

    @property
    def atomic_mass(self) -> float:
        return float(sum(m for _, m in self.atoms))

    def node_masses(self) -> np.ndarray:
        return self.grid.weights * self.density

    def total_mass(self) -> float:
        return float(self.node_masses().sum()) + self.atomic_mass

    def integrate(self, f: GridFunction | np.ndarray) -> float:
        """``int f dmu`` with lumped quadrature for the density part."""
        vals = f.values if isinstance(f, GridFunction) else np.asarray(f, dtype=float)
        total = float(self.node_masses() @ vals)
        for p, m in self.atoms:
            total += m * self.grid.interpolate(vals, p)
        return total

    def atom_density(self) -> np.ndarray:
        """Spread each atom onto its two neighbouring nodes as a spike density.

        The result has the same mass as the atoms and reproduces
        ``int f dmu`` exactly for piecewise-linear ``f``.
        """
        out = np.zeros(self.grid.size)
        w = self.grid.weights
        for p, m in self.atoms:
            i, j, t = self.grid.locate(p)
            out[i] += m * (1.0 - t) / w[i]
            out[j] += m * t / w[j]
        return out

    def support(self, cutoff: float = 0.0) -> tuple[list[GraphPoint], np.ndarray]:
        """Support points and masses used as the discrete OT marginal."""
        nm = self.node_masses()
        keep = np.flatnonzero(nm > cutoff)
        points = [self.grid.node_point(int(i)) for i in keep]
        masses = list(nm[keep])
        for p, m in self.atoms:
            points.append(p)
            masses.append(m)
        return points, np.asarray(masses, dtype=float)

    def scaled(self, c: float) -> "DiscreteMeasure":
        return DiscreteMeasure(self.grid, c * self.density, tuple((p, c * m) for p, m in self.atoms))
