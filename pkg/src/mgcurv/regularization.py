"""Averaging regularization between a graph and its extension, time mollification.

For an edge ``e`` of ``G`` the *line* of ``e`` in ``G^{2eps}`` is the tail
pendant, the edge itself and the head pendant laid end to end, with
coordinate ``z`` in ``[-l/2 - 2eps, l/2 + 2eps]``.  With
``alpha = (l + 2eps)/l`` a function ``phi`` on ``G^{2eps}`` is regularized by

    phi_eps(y) = (1/2eps) * integral of phi over [alpha*y - eps, alpha*y + eps]

and a measure ``mu`` on ``G`` is mapped to ``G^{2eps}`` by duality.  Both are
computed exactly against the piecewise-linear hat basis of the target grid:
the nodal mass of ``mu_eps`` at node ``j`` is ``int (hat_j)_eps dmu``.  Since
the hats sum to one, mass is preserved exactly; since each windowed hat
average is at most ``m_j / 2eps``, the density never exceeds ``1/(2eps)``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Sequence

import numpy as np

from .fields import DiscreteMeasure, EdgeFunction, GridFunction
from .graph import ExtensionMap, Grid, discretize, extend_graph
from .transport import MeasureCurve, metric_derivative

_GL2_X = np.array([-1.0, 1.0]) / np.sqrt(3.0)
_GL2_W = np.array([1.0, 1.0])


@dataclass(frozen=True, eq=False)
class _Line:
    """Nodes of one edge line of the extended grid, sorted by ``z``."""

    z: np.ndarray
    flat: np.ndarray

    def primitive(self, Z: np.ndarray) -> np.ndarray:
        """``H[q, k] = int_{-inf}^{Z_q} hat_k``, shape ``(len(Z), K)``."""
        z = self.z
        Z = np.asarray(Z, dtype=float)[:, None]
        K = z.size
        out = np.zeros((Z.shape[0], K))
        zl = z[:-1]
        zk = z[1:]
        # rising half of hat k on [z_{k-1}, z_k]
        hl = zk - zl
        c = np.clip(Z, zl, zk) - zl
        out[:, 1:] += c * c / (2 * hl)
        # falling half of hat k on [z_k, z_{k+1}]
        c2 = zk - np.clip(Z, zl, zk)
        out[:, :-1] += (hl * hl - c2 * c2) / (2 * hl)
        return out

    def interpolate(self, values: np.ndarray, Z: np.ndarray) -> np.ndarray:
        return np.interp(Z, self.z, values[self.flat])


@dataclass(frozen=True, eq=False)
class RegularizationMap:
    """Regularization data for a fixed ``eps`` between two grids."""

    ext: ExtensionMap
    source: Grid
    target: Grid
    lines: tuple[_Line, ...] = field(repr=False)

    @property
    def eps(self) -> float:
        return self.ext.eps

    @property
    def alpha(self) -> np.ndarray:
        return self.ext.alpha

    @cached_property
    def pendant_mass(self) -> tuple[np.ndarray, ...]:
        """Per vertex: flat indices and ``int hat_j`` over the pendant edge."""
        out = []
        for k in self.ext.pendant:
            idx = self.target.edge_nodes[k]
            w = np.full(idx.size, self.target.h[k])
            w[0] = w[-1] = 0.5 * self.target.h[k]
            out.append((idx, w))
        return tuple(out)


def make_regularization_map(source: Grid, eps: float, target_h: float | None = None) -> RegularizationMap:
    """Extend the graph by pendant edges of length ``2 eps`` and grid it.

    With the default ``target_h`` (the source grid's) the original edges
    carry exactly the source nodes.
    """
    G = source.graph
    th = source.target_h if target_h is None else target_h
    if not np.isfinite(th):
        th = float(source.h.min())
    H, ext = extend_graph(G, eps)
    target = discretize(H, th)
    lines = []
    for k, e in enumerate(G.edges):
        half = 0.5 * e.length
        zs, fl = [], []
        tail_p = ext.pendant[e.tail]
        r = np.linspace(0.0, 2 * eps, int(target.n[tail_p]))
        zs.append(-half - r[::-1])
        fl.append(target.edge_nodes[tail_p][::-1])
        zs.append(target.edge_coords(k)[1:])
        fl.append(target.edge_nodes[k][1:])
        head_p = ext.pendant[e.head]
        r = np.linspace(0.0, 2 * eps, int(target.n[head_p]))
        zs.append(half + r[1:])
        fl.append(target.edge_nodes[head_p][1:])
        lines.append(_Line(np.concatenate(zs), np.concatenate(fl)))
    return RegularizationMap(ext, source, target, tuple(lines))


def regularize_function(phi: GridFunction | np.ndarray, rmap: RegularizationMap) -> GridFunction:
    """Windowed average of a function on ``G^{2eps}``, sampled on the source grid."""
    vals = phi.values if isinstance(phi, GridFunction) else np.asarray(phi, dtype=float)
    src = rmap.source
    out = np.empty(src.size)
    eps = rmap.eps
    for k in range(src.graph.num_edges):
        line = rmap.lines[k]
        y = src.edge_coords(k)
        a = rmap.alpha[k]
        P = line.primitive(a * y + eps) - line.primitive(a * y - eps)
        out[src.edge_nodes[k]] = (P @ vals[line.flat]) / (2 * eps)
    return GridFunction(src, out)


def regularized_gradient(phi: GridFunction | np.ndarray, rmap: RegularizationMap):
    """Edgewise derivative of the regularized function.

    Differentiating the window average gives
    ``(alpha/2eps) * (phi(alpha y + eps) - phi(alpha y - eps))``.
    """
    vals = phi.values if isinstance(phi, GridFunction) else np.asarray(phi, dtype=float)
    src = rmap.source
    parts = []
    for k in range(src.graph.num_edges):
        line = rmap.lines[k]
        y = src.edge_coords(k)
        a = rmap.alpha[k]
        hi = line.interpolate(vals, a * y + rmap.eps)
        lo = line.interpolate(vals, a * y - rmap.eps)
        parts.append(a / (2 * rmap.eps) * (hi - lo))
    return EdgeFunction(src, tuple(parts))


def _edge_breakpoints(line: _Line, y_nodes: np.ndarray, alpha: float, eps: float, half: float) -> np.ndarray:
    cand = np.concatenate([y_nodes, (line.z - eps) / alpha, (line.z + eps) / alpha])
    cand = cand[(cand >= -half) & (cand <= half)]
    return np.unique(np.concatenate([cand, [-half, half]]))


def regularize_measure(mu: DiscreteMeasure, rmap: RegularizationMap) -> DiscreteMeasure:
    """Measure on ``G^{2eps}`` dual to :func:`regularize_function`."""
    if mu.grid is not rmap.source:
        raise ValueError("measure does not live on the map's source grid")
    src, tgt = rmap.source, rmap.target
    G = src.graph
    eps = rmap.eps
    c = np.zeros(tgt.size)
    edge_atoms: dict[int, list[tuple[float, float]]] = {}
    for p, m in mu.atoms:
        if p.vertex is not None:
            idx, w = rmap.pendant_mass[p.vertex]
            np.add.at(c, idx, m * w / (2 * eps))
        else:
            edge_atoms.setdefault(p.edge, []).append((p.s, m))
    for k in range(G.num_edges):
        line = rmap.lines[k]
        a = rmap.alpha[k]
        half = 0.5 * G.lengths[k]
        y_nodes = src.edge_coords(k)
        rho = mu.density[src.edge_nodes[k]]
        contrib = np.zeros(line.z.size)
        if np.any(rho > 0):
            br = _edge_breakpoints(line, y_nodes, a, eps, half)
            mid = 0.5 * (br[1:] + br[:-1])
            rad = 0.5 * (br[1:] - br[:-1])
            yq = (mid[:, None] + rad[:, None] * _GL2_X[None, :]).ravel()
            wq = (rad[:, None] * _GL2_W[None, :]).ravel()
            dens = np.interp(yq, y_nodes, rho)
            P = line.primitive(a * yq + eps) - line.primitive(a * yq - eps)
            contrib += (wq * dens) @ P
        for s, m in edge_atoms.get(k, ()):
            P = line.primitive(np.array([a * s + eps])) - line.primitive(np.array([a * s - eps]))
            contrib += m * P[0]
        np.add.at(c, line.flat, contrib / (2 * eps))
    return DiscreteMeasure(tgt, c / tgt.weights)


# -- transfer of the action ----------------------------------------------------

@dataclass(frozen=True)
class ActionTransferReport:
    eps: float
    bound: float
    max_ratio: float
    passed: bool
    ratios: tuple[float, ...]
    tolerances: tuple[float, ...]

    @property
    def worst_excess(self) -> float:
        """Largest ``ratio - bound - tolerance`` (``<= 0`` when passed)."""
        if not self.ratios:
            return -np.inf
        return float(max(r - self.bound - t for r, t in zip(self.ratios, self.tolerances)))


def action_transfer_check(
    curve: MeasureCurve,
    rmap: RegularizationMap,
    a: float = 1.0,
    solver: float = 1e-9,
    method: str = "ot",
) -> ActionTransferReport:
    """Compare speeds of a curve on ``G`` and of its regularization.

    Each step may exceed the bound ``1 + 2 eps / l_min`` by
    ``a h^2 / W_step^2 + solver``, the relative size of the node-lumping bias
    of a squared distance ``W_step^2`` on a grid of spacing ``h``.  Steps with
    no motion count as ratio 0 when the regularized curve does not move.
    """
    reg = MeasureCurve(curve.times, tuple(regularize_measure(mu, rmap) for mu in curve.measures))
    bound = 1.0 + 2.0 * rmap.eps / rmap.source.graph.min_length
    h = rmap.target.h_max
    ratios, tols = [], []
    for i in range(len(curve) - 1):
        dt = curve.times[i + 1] - curve.times[i]
        v = metric_derivative(curve, i, method)
        ve = metric_derivative(reg, i, method)
        step = v * dt
        if step <= solver:
            ratios.append(0.0 if ve * dt <= solver else float("inf"))
            tols.append(solver)
        else:
            ratios.append(float(ve / v))
            tols.append(float(a * h * h / (step * step) + solver))
    worst = max(ratios) if ratios else 0.0
    passed = all(r <= bound + t for r, t in zip(ratios, tols))
    return ActionTransferReport(rmap.eps, bound, worst, passed, tuple(ratios), tuple(tols))


def limsup_trend(eps: Sequence[float], ratios: Sequence[float]) -> float:
    """Intercept at ``eps = 0`` of the least-squares line through the max ratios."""
    eps = np.asarray(eps, dtype=float)
    ratios = np.asarray(ratios, dtype=float)
    if eps.size == 1:
        return float(ratios[0])
    slope, intercept = np.polyfit(eps, ratios, 1)
    return float(intercept)


# -- time mollification --------------------------------------------------------

def bump(tau: np.ndarray) -> np.ndarray:
    """Unnormalized bump ``exp(-1/(1 - tau^2))`` supported on ``(-1, 1)``."""
    tau = np.asarray(tau, dtype=float)
    out = np.zeros_like(tau)
    inside = np.abs(tau) < 1
    out[inside] = np.exp(-1.0 / (1.0 - tau[inside] ** 2))
    return out


def mollifier_weights(times: np.ndarray, k: float) -> np.ndarray:
    """Row-stochastic matrix ``W`` with ``mu^k_i = sum_j W_ij mu_j``.

    The curve is extended constantly outside ``[times[0], times[-1]]`` and
    sampled on the same uniform step; ``zeta_k(tau) = k zeta(k tau)`` is
    discretized on that step and normalized.
    """
    times = np.asarray(times, dtype=float)
    n = times.size
    if n == 1:
        return np.ones((1, 1))
    dt = np.diff(times)
    if not np.allclose(dt, dt[0], rtol=1e-9, atol=0):
        raise ValueError("mollification needs a uniform time grid")
    step = dt[0]
    reach = int(np.ceil(1.0 / (k * step)))
    offs = np.arange(-reach, reach + 1)
    zeta = bump(k * offs * step)
    if zeta.sum() == 0:
        return np.eye(n)
    zeta = zeta / zeta.sum()
    W = np.zeros((n, n))
    for i in range(n):
        np.add.at(W[i], np.clip(i + offs, 0, n - 1), zeta)
    return W


def mollify_in_time(curve: MeasureCurve, k: float) -> MeasureCurve:
    W = mollifier_weights(curve.times, k)
    out = []
    for row in W:
        nz = np.flatnonzero(row)
        out.append(DiscreteMeasure.mixture(row[nz], [curve.measures[j] for j in nz]))
    return MeasureCurve(curve.times, tuple(out))


# -- strongly regular approximation ------------------------------------------

@dataclass(frozen=True, eq=False)
class StronglyRegularCurve:
    times: np.ndarray
    rmap: RegularizationMap
    densities: np.ndarray
    derivatives: np.ndarray

    @property
    def grid(self) -> Grid:
        return self.rmap.target

    def curve(self) -> MeasureCurve:
        return MeasureCurve(self.times, tuple(DiscreteMeasure(self.grid, d) for d in self.densities))


def strongly_regular_approx(curve: MeasureCurve, n: int, target_h: float | None = None) -> StronglyRegularCurve:
    """Regularize in space with ``eps = 1/n`` and mollify in time with ``k = n``."""
    rmap = make_regularization_map(curve.measures[0].grid, 1.0 / n, target_h)
    reg = MeasureCurve(curve.times, tuple(regularize_measure(mu, rmap) for mu in curve.measures))
    moll = mollify_in_time(reg, n)
    dens = np.array([mu.density for mu in moll.measures])
    deriv = np.diff(dens, axis=0) / np.diff(curve.times)[:, None]
    return StronglyRegularCurve(curve.times, rmap, dens, deriv)
