"""Curvature function, test families and the weak curvature checks.

Every check returns a :class:`VerificationReport`.  Residuals are signed
(``<= 0`` means the inequality holds exactly); each case carries its own
tolerance from a :class:`ToleranceModel` together with the decomposition
into space, time and solver parts.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable, Sequence

import numpy as np

from .errors import DegenerateDenominator, EntropyInfinite, FisherInfinite
from .fields import DiscreteMeasure, GridFunction, nodal_projection_matrix
from .functionals import entropy, fisher_information, gradient_matrix
from .graph import GraphPoint, Grid, MetricGraph, discretize, point_distances
from .heat import HeatKernelEvaluator, apply_Ht, assemble_laplacian, eigendecompose
from .transport import MeasureCurve, metric_derivative, w2, wasserstein_geodesic

# calibrated on the unit interval, see ``calibrate_tolerance``
SPACE_CONST = 1.0
TIME_CONST = 0.1
SOLVER_CONST = 1e-9
DENOMINATOR_GUARD = 1e-10


# -- curvature function and R ---------------------------------------------------

@dataclass(frozen=True)
class CurvatureFunction:
    """``c(t) = C exp(-K t)`` with ``C >= 1``."""

    C: float
    K: float

    def __post_init__(self):
        if not self.C >= 1.0:
            raise ValueError(f"C must be at least 1, got {self.C!r}")
        if not math.isfinite(self.K):
            raise ValueError("K must be finite")

    def __call__(self, t):
        val = self.C * np.exp(-self.K * np.asarray(t, dtype=float))
        return float(val) if np.ndim(val) == 0 else val


def R(c: CurvatureFunction, t0: float, t1: float) -> float:
    """Average of ``c^{-2}`` over the segment from ``t0`` to ``t1``, in closed form."""
    if not 0.0 <= t0 <= t1:
        raise ValueError("need 0 <= t0 <= t1")
    C2 = c.C * c.C
    if c.K == 0.0:
        return 1.0 / C2
    x = 2.0 * c.K * (t1 - t0)
    # expm1(x)/x, with the series where x is tiny or denormal
    g = 1.0 + 0.5 * x if abs(x) < 1e-8 else math.expm1(x) / x
    return math.exp(2.0 * c.K * t0) * g / C2


_GL32 = np.polynomial.legendre.leggauss(32)


def R_quadrature(c: CurvatureFunction, t0: float, t1: float) -> float:
    """Same quantity by 32-point Gauss-Legendre in ``s``."""
    x, w = _GL32
    s = 0.5 * (x + 1.0)
    vals = np.asarray(c((1 - s) * t0 + s * t1)) ** -2.0
    return float(0.5 * np.sum(w * vals))


# -- spectrum -------------------------------------------------------------------

def _grid_lambda1(grid: Grid) -> float:
    return eigendecompose(assemble_laplacian(grid), m=min(3, grid.size)).lambda1


def lambda1(grid: Grid, extrapolate: bool = True) -> float:
    """Smallest nonzero Kirchhoff eigenvalue.

    With ``extrapolate`` the grid value is combined with the one on a grid of
    half the spacing, ``(4 lam(h/2) - lam(h)) / 3``, removing the ``h^2`` term.
    """
    lam_h = _grid_lambda1(grid)
    if not extrapolate:
        return lam_h
    th = grid.target_h if math.isfinite(grid.target_h) else float(grid.h.max())
    fine = discretize(grid.graph, 0.5 * th)
    return (4.0 * _grid_lambda1(fine) - lam_h) / 3.0


# -- tolerance model ------------------------------------------------------------

@dataclass(frozen=True)
class ToleranceModel:
    """``tol = a h^2 + b dt + c_solver``, optionally scaled per case."""

    a: float = SPACE_CONST
    b: float = TIME_CONST
    c_solver: float = SOLVER_CONST

    def terms(self, h: float, dt: float = 0.0, scale: float = 1.0) -> dict:
        return {
            "space": float(self.a * h * h * scale),
            "time": float(self.b * dt * scale),
            "solver": float(self.c_solver),
        }

    def __call__(self, h: float, dt: float = 0.0, scale: float = 1.0) -> float:
        return float(sum(self.terms(h, dt, scale).values()))


# -- reports --------------------------------------------------------------------

@dataclass(frozen=True)
class VerificationReport:
    """Outcome of one check over a family of cases.

    ``worst_residual`` and ``tolerance`` belong to the case with the largest
    ``residual - tolerance``, so ``passed`` holds iff every case passes.
    """

    condition: str
    cases: tuple[dict, ...]
    worst_residual: float
    tolerance: float
    tolerance_terms: dict
    passed: bool
    witness: dict | None
    notes: dict = field(default_factory=dict)

    @classmethod
    def from_rows(cls, condition: str, rows: Sequence[dict], notes: dict | None = None) -> "VerificationReport":
        rows = tuple(rows)
        notes = dict(notes or {})
        if not rows:
            return cls(condition, rows, -math.inf, 0.0, {}, True, None, notes)
        margin = np.array([r["residual"] - r["tolerance"] for r in rows], dtype=float)
        margin = np.where(np.isnan(margin), np.inf, margin)
        i = int(np.argmax(margin))
        w = rows[i]
        terms = {k: w[k] for k in ("space", "time", "solver") if k in w}
        passed = bool(w["residual"] <= w["tolerance"])
        return cls(condition, rows, float(w["residual"]), float(w["tolerance"]), terms, passed, dict(w), notes)

    @property
    def violations(self) -> int:
        return sum(1 for r in self.cases if not r["residual"] <= r["tolerance"])


def _row(tol: ToleranceModel, h: float, dt: float, scale: float, residual: float, /, **params) -> dict:
    terms = tol.terms(h, dt, scale)
    row = dict(params)
    row["residual"] = float(residual)
    row["tolerance"] = float(sum(terms.values()))
    row.update(terms)
    return row


def _pmap(fn: Callable, items: Sequence, workers: int) -> list:
    if workers <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


# -- context --------------------------------------------------------------------

@dataclass(eq=False)
class VerificationContext:
    """Grid, heat semigroup and the edgewise operators shared by all checks."""

    grid: Grid
    heat: HeatKernelEvaluator

    @classmethod
    def build(cls, G: MetricGraph, h: float) -> "VerificationContext":
        grid = discretize(G, h)
        return cls(grid, HeatKernelEvaluator.for_grid(grid))

    @property
    def graph(self) -> MetricGraph:
        return self.grid.graph

    @property
    def h(self) -> float:
        return self.grid.h_max

    @cached_property
    def grad(self):
        return gradient_matrix(self.grid)

    @cached_property
    def project(self):
        return nodal_projection_matrix(self.grid)

    @cached_property
    def edge_rows(self) -> np.ndarray:
        """Nodal index of every edgewise row."""
        return np.concatenate(self.grid.edge_nodes)

    @cached_property
    def row_points(self) -> tuple[np.ndarray, np.ndarray]:
        edges = np.concatenate([np.full(idx.size, k) for k, idx in enumerate(self.grid.edge_nodes)])
        s = np.concatenate([self.grid.edge_coords(k) for k in range(self.graph.num_edges)])
        return edges, s

    def gamma(self, F: np.ndarray) -> np.ndarray:
        """Edgewise ``|grad f|^2`` for each column of ``F``."""
        d = self.grad @ F
        return d * d

    def heat_edgewise(self, E: np.ndarray, t: float) -> np.ndarray:
        """``P_t`` of edgewise data; identity at ``t = 0``."""
        if t == 0:
            return np.array(E, dtype=float)
        nodal = self.project @ E
        return self.heat.apply(nodal, t)[self.edge_rows]

    def witness_location(self, row: int) -> dict:
        edges, s = self.row_points
        return {"edge": int(edges[row]), "s": float(s[row])}


# -- test families ----------------------------------------------------------------

def test_basis(ctx: VerificationContext, n_eig: int = 10, n_random: int = 20, seed: int = 0):
    """Labels and columns of the test-function family.

    Low eigenfunctions, distance functions to every vertex and seeded random
    low-pass combinations of the eigenfunctions.
    """
    phi = ctx.heat.spectrum.eigenvectors
    m = min(n_eig, phi.shape[1] - 1)
    cols, labels = [], []
    for k in range(1, m + 1):
        v = phi[:, k]
        cols.append(v / np.abs(v).max())
        labels.append(f"eig{k}")
    D = ctx.grid.distance_matrix
    for v in range(ctx.graph.num_vertices):
        cols.append(np.array(D[v]))
        labels.append(f"dist{v}")
    rng = np.random.default_rng(seed)
    for j in range(n_random):
        coef = rng.standard_normal(m) / np.arange(1, m + 1)
        f = phi[:, 1 : m + 1] @ coef
        cols.append(f / np.abs(f).max())
        labels.append(f"rand{j}")
    return labels, np.column_stack(cols)


def _node_points(grid: Grid) -> list[GraphPoint]:
    return grid.node_points()


def gaussian_bump(grid: Grid, center: GraphPoint, width: float, floor: float = 1e-2) -> DiscreteMeasure:
    """Normalized ``floor + exp(-d(x, center)^2 / (2 width^2))``."""
    d = point_distances(grid.graph, _node_points(grid), [center])[:, 0]
    dens = floor + np.exp(-0.5 * (d / width) ** 2)
    return DiscreteMeasure.from_density(grid, dens, normalize=True)


def random_point(G: MetricGraph, rng: np.random.Generator) -> GraphPoint:
    k = int(rng.choice(G.num_edges, p=G.lengths / G.total_length))
    half = 0.5 * G.lengths[k]
    return G.point(k, float(rng.uniform(-half, half)))


def random_measure(ctx: VerificationContext, rng: np.random.Generator, kind: str) -> DiscreteMeasure:
    G, grid = ctx.graph, ctx.grid
    if kind == "dirac":
        return DiscreteMeasure.dirac(grid, random_point(G, rng))
    if kind == "atoms":
        n = int(rng.integers(2, 4))
        w = rng.random(n) + 0.1
        return DiscreteMeasure.from_atoms(grid, [random_point(G, rng) for _ in range(n)], w / w.sum())
    if kind == "density":
        return gaussian_bump(grid, random_point(G, rng), float(rng.uniform(0.05, 0.3)))
    raise ValueError(f"unknown measure kind {kind!r}")


def random_measure_pairs(ctx: VerificationContext, n: int, seed: int = 0):
    """Seeded pairs cycling through Dirac, atomic and smooth measures."""
    rng = np.random.default_rng(seed)
    kinds = ("dirac", "atoms", "density")
    return [(random_measure(ctx, rng, kinds[i % 3]), random_measure(ctx, rng, kinds[i % 3])) for i in range(n)]


def random_density_pairs(ctx: VerificationContext, n: int, seed: int = 0):
    rng = np.random.default_rng(seed)
    return [(random_measure(ctx, rng, "density"), random_measure(ctx, rng, "density")) for _ in range(n)]


# -- constant estimation --------------------------------------------------------

@dataclass(frozen=True)
class ConstantEstimate:
    C: float
    K: float
    ratio: float
    floor: float
    witness: dict

    @property
    def curvature(self) -> CurvatureFunction:
        return CurvatureFunction(self.C, self.K)


def estimate_C(
    ctx: VerificationContext,
    K: float,
    F: np.ndarray,
    times: Sequence[float],
    labels: Sequence[str] | None = None,
    guard: float = DENOMINATOR_GUARD,
) -> ConstantEstimate:
    """Largest ``sqrt(Gamma(P_t f)) / (exp(-Kt) P_t sqrt(Gamma(f)))`` over the family.

    Points whose denominator falls below ``guard * max sqrt(Gamma(f))`` are
    skipped.  The estimate is clipped below at 1 and reported next to the
    floor ``deg_max - 1``.
    """
    F = np.asarray(F, dtype=float)
    if F.ndim == 1:
        F = F[:, None]
    labels = list(labels) if labels is not None else [f"f{j}" for j in range(F.shape[1])]
    sq = np.sqrt(ctx.gamma(F))
    scale = sq.max(axis=0)
    best, witness, any_valid = 0.0, {}, False
    for t in times:
        num = np.sqrt(ctx.gamma(ctx.heat.apply(F, t)))
        den = math.exp(-K * t) * ctx.heat_edgewise(sq, t)
        valid = (den > guard * scale[None, :]) & (scale[None, :] > 0)
        if not valid.any():
            continue
        any_valid = True
        ratio = np.where(valid, num / np.where(valid, den, 1.0), -np.inf)
        r, j = np.unravel_index(int(np.argmax(ratio)), ratio.shape)
        if ratio[r, j] > best:
            best = float(ratio[r, j])
            witness = {"f": labels[j], "t": float(t), **ctx.witness_location(int(r))}
    if not any_valid:
        raise DegenerateDenominator("every denominator is below the guard")
    floor = float(max(ctx.graph.degree) - 1)
    return ConstantEstimate(max(1.0, best), float(K), best, floor, witness)


# -- BE_w -----------------------------------------------------------------------

def check_BEw(
    ctx: VerificationContext,
    c: CurvatureFunction,
    F: np.ndarray,
    times: Sequence[float],
    labels: Sequence[str] | None = None,
    tol: ToleranceModel | None = None,
) -> VerificationReport:
    """``max_x Gamma(P_t f) - c(t)^2 P_t Gamma(f)`` for every ``f`` and ``t``.

    The space tolerance is scaled by ``max Gamma(f)``.
    """
    tol = tol or ToleranceModel()
    F = np.asarray(F, dtype=float)
    if F.ndim == 1:
        F = F[:, None]
    labels = list(labels) if labels is not None else [f"f{j}" for j in range(F.shape[1])]
    G0 = ctx.gamma(F)
    gmax = G0.max(axis=0)
    rows = []
    for t in times:
        lhs = ctx.gamma(ctx.heat.apply(F, t))
        rhs = c(t) ** 2 * ctx.heat_edgewise(G0, t)
        res = lhs - rhs
        worst = np.argmax(res, axis=0)
        for j, lab in enumerate(labels):
            r = int(worst[j])
            rows.append(_row(tol, ctx.h, 0.0, gmax[j], res[r, j], f=lab, t=float(t), **ctx.witness_location(r)))
    return VerificationReport.from_rows("BE_w", rows, {"C": c.C, "K": c.K, "h": ctx.h})


# -- K_w ------------------------------------------------------------------------

def kw_terms(ctx: VerificationContext, c: CurvatureFunction, mu, nu, t: float, w0: float | None = None):
    """``(W2(H_t mu, H_t nu), W2(mu, nu))``."""
    if w0 is None:
        w0 = w2(mu, nu)[0]
    wt = w0 if t == 0 else w2(apply_Ht(ctx.heat, mu, t), apply_Ht(ctx.heat, nu, t))[0]
    return wt, w0


def check_Kw(
    ctx: VerificationContext,
    c: CurvatureFunction,
    pairs: Sequence[tuple[DiscreteMeasure, DiscreteMeasure]],
    times: Sequence[float],
    tol: ToleranceModel | None = None,
    workers: int = 1,
) -> VerificationReport:
    """``W2(H_t mu, H_t nu) - c(t) W2(mu, nu)`` over pairs and times.

    The grid bias is of order ``h^2`` in squared distance, so the space
    tolerance is divided by ``W_t + c W_0 + h``.
    """
    tol = tol or ToleranceModel()

    def one(i):
        mu, nu = pairs[i]
        w0 = w2(mu, nu)[0]
        out = []
        for t in times:
            wt, _ = kw_terms(ctx, c, mu, nu, t, w0)
            ct = c(t)
            scale = 1.0 / (wt + ct * w0 + ctx.h)
            out.append(_row(tol, ctx.h, 0.0, scale, wt - ct * w0, pair=i, t=float(t), W_t=wt, W_0=w0))
        return out

    rows = [r for rs in _pmap(one, list(range(len(pairs))), workers) for r in rs]
    return VerificationReport.from_rows("K_w", rows, {"C": c.C, "K": c.K, "h": ctx.h})


# -- EVI_w ----------------------------------------------------------------------

def _ent(mu: DiscreteMeasure, what: str) -> float:
    e = entropy(mu)
    if not math.isfinite(e):
        raise EntropyInfinite(f"entropy of {what} is infinite")
    return e


def evi_residual(ctx: VerificationContext, c: CurvatureFunction, mu0, mu1, t0: float, t1: float) -> tuple[float, dict]:
    """Signed EVI_w residual ``left - right`` and its parts."""
    if not 0.0 <= t0 <= t1:
        raise ValueError("need 0 <= t0 <= t1")
    e0 = _ent(mu0, "mu0")
    if t1 == 0.0:
        _ent(mu1, "mu1")
    H = ctx.heat
    m0 = apply_Ht(H, mu0, t0)
    m1 = apply_Ht(H, mu1, t1)
    wt = w2(m1, m0)[0]
    w0 = w2(mu1, mu0)[0]
    r = R(c, t0, t1)
    left = 0.5 * wt * wt - 0.5 * w0 * w0 / r
    if t1 == t0:
        right = 0.0
    else:
        e0t = entropy(m0) if t0 > 0 else e0
        right = (t1 - t0) * (e0t - _ent(m1, "H_t1 mu1"))
    return left - right, {"W_t": wt, "W_0": w0, "R": r, "left": left, "right": right}


def check_EVIw(
    ctx: VerificationContext,
    c: CurvatureFunction,
    pairs: Sequence[tuple[DiscreteMeasure, DiscreteMeasure]],
    time_pairs: Sequence[tuple[float, float]],
    tol: ToleranceModel | None = None,
    workers: int = 1,
) -> VerificationReport:
    tol = tol or ToleranceModel()
    cases = [(i, t0, t1) for i in range(len(pairs)) for t0, t1 in time_pairs]

    def one(case):
        i, t0, t1 = case
        res, parts = evi_residual(ctx, c, pairs[i][0], pairs[i][1], t0, t1)
        return _row(tol, ctx.h, 0.0, 1.0, res, pair=i, t0=float(t0), t1=float(t1), W_t=parts["W_t"], W_0=parts["W_0"])

    rows = _pmap(one, cases, workers)
    return VerificationReport.from_rows("EVI_w", rows, {"C": c.C, "K": c.K, "h": ctx.h})


# -- RCD_w ----------------------------------------------------------------------

def rcd_residual(ctx: VerificationContext, c: CurvatureFunction, mu0, mu1, s: float, t: float, h: float, plan=None):
    """Signed RCD_w residual along the plan-based displacement interpolation."""
    if not h > 0:
        raise ValueError("h must be positive")
    _ent(mu0, "mu0")
    _ent(mu1, "mu1")
    H = ctx.heat
    w0, plan0 = w2(mu0, mu1)
    mus = wasserstein_geodesic(mu0, mu1, s, plan if plan is not None else plan0)
    a0 = apply_Ht(H, mu0, t)
    a1 = apply_Ht(H, mu1, t)
    wt = w2(a0, a1)[0]
    lhs = _ent(apply_Ht(H, mus, t + h), "H_{t+h} mu_s")
    bracket = w0 * w0 / R(c, t, t + h) - wt * wt
    rhs = (1 - s) * entropy(a0) + s * entropy(a1) + s * (1 - s) / (2 * h) * bracket
    return lhs - rhs, {"W_0": w0, "W_t": wt, "lhs": lhs, "rhs": rhs}


def check_RCDw(
    ctx: VerificationContext,
    c: CurvatureFunction,
    pairs: Sequence[tuple[DiscreteMeasure, DiscreteMeasure]],
    params: Sequence[tuple[float, float, float]],
    tol: ToleranceModel | None = None,
    workers: int = 1,
) -> VerificationReport:
    """Cases ``(s, t, h)`` for every pair.

    Squared distances enter with weight ``s(1-s)/2h``, so the space
    tolerance is scaled by ``1 + s(1-s)/2h``.
    """
    tol = tol or ToleranceModel()
    cases = [(i, s, t, h) for i in range(len(pairs)) for s, t, h in params]

    def one(case):
        i, s, t, h = case
        res, parts = rcd_residual(ctx, c, pairs[i][0], pairs[i][1], s, t, h)
        scale = 1.0 + s * (1 - s) / (2 * h)
        return _row(tol, ctx.h, 0.0, scale, res, pair=i, s=float(s), t=float(t), h=float(h))

    rows = _pmap(one, cases, workers)
    return VerificationReport.from_rows("RCD_w", rows, {"C": c.C, "K": c.K, "h": ctx.h})


# -- omega ----------------------------------------------------------------------

@dataclass(frozen=True)
class OmegaResult:
    """Entries are plain floats; ``residual`` is ``-inf`` for a vacuous pass."""

    value: float
    distortion: float
    fisher_integral: float
    ent_s: float
    bound: float
    residual: float
    vacuous: bool


_GL8 = np.polynomial.legendre.leggauss(8)


def fisher_integral(ctx: VerificationContext, mu: DiscreteMeasure, h: float, panels: int = 4) -> float:
    """``int_0^h I(H_tau mu) dtau`` by composite Gauss-Legendre; ``inf`` for atoms."""
    if mu.has_atoms:
        return math.inf
    x, w = _GL8
    edges = np.linspace(0.0, h, panels + 1)
    total = 0.0
    for a, b in zip(edges[:-1], edges[1:]):
        for xi, wi in zip(x, w):
            tau = 0.5 * (a + b) + 0.5 * (b - a) * xi
            total += 0.5 * (b - a) * wi * fisher_information(apply_Ht(ctx.heat, mu, tau))
    return total


def omega(
    ctx: VerificationContext,
    c: CurvatureFunction,
    mu0: DiscreteMeasure,
    mu1: DiscreteMeasure,
    s: float,
    h: float,
    strict: bool = False,
) -> OmegaResult:
    """Distortion of geodesic convexity and the recheck of the convexity bound.

    For an atomic geodesic point the Fisher integral diverges; the value is
    ``inf`` and, since ``Ent(mu_s)`` is infinite too, the bound holds
    vacuously.  ``strict`` raises :class:`FisherInfinite` instead.
    """
    e0 = _ent(mu0, "mu0")
    e1 = _ent(mu1, "mu1")
    w0, plan = w2(mu0, mu1)
    mus = wasserstein_geodesic(mu0, mu1, s, plan)
    dist = s * (1 - s) / (2 * h) * (1.0 / R(c, 0.0, h) - 1.0) * w0 * w0
    fi = fisher_integral(ctx, mus, h)
    if not math.isfinite(fi) and strict:
        raise FisherInfinite("Fisher information along the heat flow of mu_s is not integrable")
    val = dist + fi
    es = entropy(mus)
    bound = (1 - s) * e0 + s * e1 + val
    val, fi, bound = float(val), float(fi), float(bound)
    if math.isinf(es) and math.isinf(val):
        return OmegaResult(val, dist, fi, es, bound, -math.inf, True)
    return OmegaResult(val, dist, fi, es, bound, es - bound, False)


# -- gradient flow -------------------------------------------------------------

@dataclass(frozen=True)
class GradientFlowResult:
    times: np.ndarray
    entropy: np.ndarray
    fisher: np.ndarray
    speed2: np.ndarray
    D_partial: np.ndarray
    h: float
    dt: float

    @property
    def D(self) -> float:
        return float(self.D_partial[-1])

    @property
    def entropy_drop(self) -> float:
        return float(self.entropy[0] - self.entropy[-1])

    @property
    def half_action(self) -> float:
        return float(0.5 * np.sum(self.speed2 * np.diff(self.times)))

    @property
    def half_fisher(self) -> float:
        return float(0.25 * np.sum((self.fisher[1:] + self.fisher[:-1]) * np.diff(self.times)))


def default_speed_method(grid: Grid) -> str:
    return "quantile" if grid.graph.is_path_graph() else "flux"


def gradient_flow_functional(
    ctx: VerificationContext,
    f0: DiscreteMeasure | np.ndarray,
    T: float,
    n_steps: int,
    method: str | None = None,
) -> GradientFlowResult:
    """Terms of ``Ent(mu_T) - Ent(mu_0) + 1/2 int |mu'|^2 + I`` along ``H_t mu_0``.

    Speeds are forward differences of the chosen distance and the Fisher
    information is integrated by the trapezoidal rule.
    """
    if not T > 0:
        raise ValueError("T must be positive")
    mu0 = f0 if isinstance(f0, DiscreteMeasure) else DiscreteMeasure.from_density(ctx.grid, f0, normalize=True)
    if mu0.has_atoms:
        raise EntropyInfinite("gradient-flow start must be a density")
    method = method or default_speed_method(ctx.grid)
    times = np.linspace(0.0, T, n_steps + 1)
    curve = MeasureCurve(times, tuple(apply_Ht(ctx.heat, mu0, t) for t in times))
    ent = np.array([entropy(m) for m in curve.measures])
    fis = np.array([fisher_information(m) for m in curve.measures])
    sp2 = np.array([metric_derivative(curve, i, method) ** 2 for i in range(n_steps)])
    dt = np.diff(times)
    act = np.concatenate([[0.0], np.cumsum(0.5 * sp2 * dt)])
    fi = np.concatenate([[0.0], np.cumsum(0.25 * (fis[1:] + fis[:-1]) * dt)])
    D = ent - ent[0] + act + fi
    return GradientFlowResult(times, ent, fis, sp2, D, ctx.h, float(T / n_steps))


def check_gradient_flow(
    ctx: VerificationContext,
    f0: DiscreteMeasure | np.ndarray,
    T: float,
    n_steps: int,
    tol: ToleranceModel | None = None,
    method: str | None = None,
) -> tuple[VerificationReport, GradientFlowResult]:
    tol = tol or ToleranceModel()
    res = gradient_flow_functional(ctx, f0, T, n_steps, method)
    row = _row(tol, ctx.h, res.dt, 1.0, abs(res.D), T=float(T), n_steps=int(n_steps), D=res.D)
    return VerificationReport.from_rows("gradient_flow", [row], {"h": ctx.h, "dt": res.dt}), res


# -- calibration ----------------------------------------------------------------

def calibrate_tolerance(h: float = 1 / 50, n_steps: int = 20, seed: int = 0) -> dict:
    """Measured discretization constants on the unit interval.

    Runs the classical (``C = 1, K = 0``) BE and Kuwada checks, where exact
    answers are nonpositive, and the gradient-flow identity, where the exact
    answer is zero, and returns the implied ``a`` and ``b``.
    """
    from .graph import build_graph

    G = build_graph({"vertices": [0, 1], "edges": [{"tail": 0, "head": 1, "length": 1.0}]})
    ctx = VerificationContext.build(G, h)
    zero = ToleranceModel(0.0, 0.0, 0.0)
    c = CurvatureFunction(1.0, 0.0)
    labels, F = test_basis(ctx, seed=seed)
    times = (0.0, 0.01, 0.02, 0.05, 0.1, 0.2, 0.5, 1.0)
    be = check_BEw(ctx, c, F, times, labels, zero)
    a_be = max(0.0, max(r["residual"] / (h * h * max(_gmax(ctx, F, labels, r["f"]), 1e-300)) for r in be.cases))
    kw = check_Kw(ctx, c, random_measure_pairs(ctx, 12, seed), times[1:], zero)
    a_kw = max(0.0, max(r["residual"] * (r["W_t"] + r["W_0"] + ctx.h) / (h * h) for r in kw.cases))
    f0 = 1.0 + 0.5 * np.cos(np.pi * (ctx.grid.node_s + 0.5))
    res = gradient_flow_functional(ctx, f0, 0.5, n_steps)
    pairs = random_density_pairs(ctx, 4, seed)
    tp = [(a, b) for a in (0.0, 0.05, 0.1, 0.2) for b in (0.0, 0.05, 0.1, 0.2) if a <= b]
    evi = check_EVIw(ctx, c, pairs, tp, zero)
    a_evi = max(0.0, evi.worst_residual / (h * h))
    return {"a_be": a_be, "a_kw": a_kw, "a_evi": a_evi, "b_gf": abs(res.D) / res.dt, "h": h, "dt": res.dt}


def _gmax(ctx, F, labels, lab) -> float:
    j = list(labels).index(lab)
    return float(ctx.gamma(F[:, j : j + 1]).max())
