"""Command line: ``mgcurv verify | spectrum | flow``.

Exit codes: 0 everything passed, 1 a suite failed, 2 usage or configuration
error (nothing is written in that case).
"""

from __future__ import annotations

import argparse
import math
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Sequence

import numpy as np
import yaml

from .curvature import (
    CurvatureFunction,
    ToleranceModel,
    VerificationContext,
    VerificationReport,
    check_BEw,
    check_EVIw,
    check_gradient_flow,
    check_Kw,
    check_RCDw,
    estimate_C,
    gaussian_bump,
    gradient_flow_functional,
    lambda1,
    omega,
    random_density_pairs,
    random_measure_pairs,
    random_point,
    test_basis,
)
from .errors import MetricGraphError
from .fields import DiscreteMeasure
from .graph import MetricGraph, discretize, geodesic_point, graph_distance, load_graph
from .heat import apply_Ht
from .regularization import action_transfer_check, limsup_trend, make_regularization_map, regularize_measure
from .report import csv_text, report_record, summary_rows, write_json, SUMMARY_COLUMNS
from .transport import MeasureCurve

SUITES = ("be", "kw", "evi", "rcd", "gf", "reg")
EXIT_OK, EXIT_FAIL, EXIT_CONFIG = 0, 1, 2


class ConfigError(Exception):
    pass


@dataclass(frozen=True)
class RunConfig:
    graph: str
    suites: tuple[str, ...]
    h: float = 0.02
    t_grid: tuple[float, ...] = (0.0, 0.01, 0.02, 0.05, 0.1, 0.2, 0.5, 1.0)
    eps_sweep: tuple[float, ...] = (0.2, 0.1, 0.05, 0.025)
    seed: int = 0
    force_C: float | None = None
    force_K: float | None = None
    pairs: int = 100
    density_pairs: int = 4
    flow_T: float = 0.2
    flow_steps: int = 40
    tol_a: float = ToleranceModel.a
    tol_b: float = ToleranceModel.b
    tol_solver: float = ToleranceModel.c_solver
    workers: int = 4
    out: str = "mgcurv-out"

    def validate(self) -> None:
        positive = {
            "h": self.h, "pairs": self.pairs, "density_pairs": self.density_pairs,
            "flow_T": self.flow_T, "flow_steps": self.flow_steps, "workers": self.workers,
        }
        for k, v in positive.items():
            if not v > 0:
                raise ConfigError(f"{k} must be positive")
        for k in ("tol_a", "tol_b", "tol_solver"):
            if not getattr(self, k) >= 0:
                raise ConfigError(f"{k} must be nonnegative")
        if not self.t_grid or any(t < 0 or not math.isfinite(t) for t in self.t_grid):
            raise ConfigError("t-grid entries must be finite and nonnegative")
        if not self.eps_sweep or any(not e > 0 for e in self.eps_sweep):
            raise ConfigError("eps-sweep entries must be positive")
        if self.force_C is not None and not self.force_C >= 1:
            raise ConfigError("--force-C must be at least 1")
        if self.force_K is not None and not math.isfinite(self.force_K):
            raise ConfigError("--force-K must be finite")

    @property
    def tolerance(self) -> ToleranceModel:
        return ToleranceModel(self.tol_a, self.tol_b, self.tol_solver)


def _floats(text: str) -> tuple[float, ...]:
    try:
        return tuple(float(x) for x in text.replace(";", ",").split(",") if x.strip())
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"not a list of numbers: {text!r}") from exc


def _load(path: str) -> MetricGraph:
    if not Path(path).is_file():
        raise ConfigError(f"graph file not found: {path}")
    try:
        return load_graph(path)
    except MetricGraphError as exc:
        raise ConfigError(f"invalid graph description {path}: {exc}") from exc


# -- suites ---------------------------------------------------------------------

@dataclass
class Setup:
    cfg: RunConfig
    ctx: VerificationContext
    lam1: float
    curvature: CurvatureFunction
    estimate: dict
    labels: list
    basis: np.ndarray


def _setup(cfg: RunConfig, G: MetricGraph) -> Setup:
    ctx = VerificationContext.build(G, cfg.h)
    lam1 = lambda1(ctx.grid)
    K = lam1 if cfg.force_K is None else cfg.force_K
    labels, F = test_basis(ctx, seed=cfg.seed)
    est = estimate_C(ctx, K, F, cfg.t_grid, labels)
    C = est.C if cfg.force_C is None else cfg.force_C
    info = {"C_est": est.C, "ratio": est.ratio, "floor": est.floor, "witness": est.witness, "K": K}
    return Setup(cfg, ctx, lam1, CurvatureFunction(C, K), info, labels, F)


def _suite_be(st: Setup) -> list[VerificationReport]:
    return [check_BEw(st.ctx, st.curvature, st.basis, st.cfg.t_grid, st.labels, st.cfg.tolerance)]


def _suite_kw(st: Setup) -> list[VerificationReport]:
    pairs = random_measure_pairs(st.ctx, st.cfg.pairs, st.cfg.seed)
    times = [t for t in st.cfg.t_grid if t > 0] or list(st.cfg.t_grid)
    return [check_Kw(st.ctx, st.curvature, pairs, times, st.cfg.tolerance)]


EVI_TIMES = (0.0, 0.05, 0.1, 0.2)


def _suite_evi(st: Setup) -> list[VerificationReport]:
    pairs = random_density_pairs(st.ctx, st.cfg.density_pairs, st.cfg.seed)
    tp = [(a, b) for a in EVI_TIMES for b in EVI_TIMES if a <= b]
    return [check_EVIw(st.ctx, st.curvature, pairs, tp, st.cfg.tolerance)]


RCD_PARAMS = tuple((s, t, h) for s in (0.0, 0.25, 0.5, 0.75, 1.0) for t in (0.0, 0.1) for h in (0.05, 0.1))


def _suite_rcd(st: Setup) -> list[VerificationReport]:
    pairs = random_density_pairs(st.ctx, st.cfg.density_pairs, st.cfg.seed + 1)
    rcd = check_RCDw(st.ctx, st.curvature, pairs, RCD_PARAMS, st.cfg.tolerance)
    rows = []
    for i, (m0, m1) in enumerate(pairs):
        for s in (0.0, 0.5, 1.0):
            o = omega(st.ctx, st.curvature, m0, m1, s, 0.1)
            rows.append({
                "pair": i, "s": s, "h": 0.1, "omega": o.value, "vacuous": o.vacuous,
                "residual": o.residual, "tolerance": st.cfg.tolerance(st.ctx.h),
                **st.cfg.tolerance.terms(st.ctx.h),
            })
    return [rcd, VerificationReport.from_rows("omega_convexity", rows)]


def flow_start(ctx: VerificationContext, preset: str) -> np.ndarray:
    """Initial density for the named presets ``uniform``, ``cosine`` and ``bump``."""
    grid = ctx.grid
    if preset == "uniform":
        return np.ones(grid.size)
    if preset == "cosine":
        phi = ctx.heat.spectrum.eigenvectors[:, 1]
        return 1.0 + 0.5 * phi / np.abs(phi).max()
    if preset == "bump":
        return gaussian_bump(grid, grid.node_point(0), 0.2).density
    raise ConfigError(f"unknown preset {preset!r}")


def _suite_gf(st: Setup) -> list[VerificationReport]:
    f0 = flow_start(st.ctx, "cosine")
    rep, _ = check_gradient_flow(st.ctx, f0, st.cfg.flow_T, st.cfg.flow_steps, st.cfg.tolerance)
    return [rep]


def _reg_curves(grid, seed: int) -> list[MeasureCurve]:
    """Dirac curves along geodesics whose endpoints are at least 0.4 diam apart."""
    G = grid.graph
    rng = np.random.default_rng(seed)
    far = 0.4 * float(grid.distance_matrix.max())
    curves = []
    ts = np.linspace(0.0, 1.0, 9)
    while len(curves) < 3:
        x, y = random_point(G, rng), random_point(G, rng)
        if graph_distance(G, x, y) < far:
            continue
        curves.append(MeasureCurve(ts, [DiscreteMeasure.dirac(grid, geodesic_point(G, x, y, s)) for s in ts]))
    return curves


def _suite_reg(st: Setup) -> list[VerificationReport]:
    """Regularization checks on a grid that resolves the smallest window."""
    cfg = st.cfg
    G = st.ctx.graph
    grid = discretize(G, min(cfg.h, 0.25 * min(cfg.eps_sweep)))
    rng = np.random.default_rng(cfg.seed)
    probes = [DiscreteMeasure.dirac(grid, G.vertex_point(v)) for v in range(G.num_vertices)]
    probes.append(gaussian_bump(grid, random_point(G, rng), 0.1))
    probes.append(DiscreteMeasure.from_atoms(grid, [random_point(G, rng) for _ in range(3)], [0.2, 0.3, 0.5]))
    curves = _reg_curves(grid, cfg.seed)
    mass_rows, cap_rows, ratio_rows, maxima = [], [], [], []
    for eps in cfg.eps_sweep:
        rmap = make_regularization_map(grid, eps)
        for j, mu in enumerate(probes):
            me = regularize_measure(mu, rmap)
            mass_rows.append({"eps": eps, "measure": j, "residual": abs(me.total_mass() - mu.total_mass()),
                              "tolerance": 1e-12, "solver": 1e-12})
            cap_rows.append({"eps": eps, "measure": j, "residual": float(me.density.max()) * 2 * eps - 1.0,
                             "tolerance": 1e-12, "solver": 1e-12})
        worst = 0.0
        for k, curve in enumerate(curves):
            rep = action_transfer_check(curve, rmap, a=cfg.tol_a, solver=cfg.tol_solver)
            worst = max(worst, rep.max_ratio)
            for i, (r, tl) in enumerate(zip(rep.ratios, rep.tolerances)):
                ratio_rows.append({"eps": eps, "curve": k, "step": i, "ratio": r, "bound": rep.bound,
                                   "residual": r - rep.bound, "tolerance": tl, "space": tl - cfg.tol_solver,
                                   "solver": cfg.tol_solver})
        maxima.append(worst)
    trend = limsup_trend(cfg.eps_sweep, maxima)
    trend_row = {"residual": trend - 1.0, "tolerance": 0.02, "limsup": trend}
    return [
        VerificationReport.from_rows("reg_mass", mass_rows),
        VerificationReport.from_rows("reg_density_cap", cap_rows),
        VerificationReport.from_rows("reg_action_ratio", ratio_rows),
        VerificationReport.from_rows("reg_limsup_trend", [trend_row]),
    ]


SUITE_FUNCS = {
    "be": _suite_be, "kw": _suite_kw, "evi": _suite_evi,
    "rcd": _suite_rcd, "gf": _suite_gf, "reg": _suite_reg,
}


def run_verify(cfg: RunConfig) -> tuple[int, dict]:
    """Run the selected suites and write the report files.

    Suites run in a thread pool; results are collected in suite order so the
    output does not depend on scheduling.
    """
    cfg.validate()
    G = _load(cfg.graph)
    st = _setup(cfg, G)
    with ThreadPoolExecutor(max_workers=cfg.workers) as pool:
        futures = [(name, pool.submit(SUITE_FUNCS[name], st)) for name in cfg.suites]
        results = {name: fut.result() for name, fut in futures}
    passed = all(rep.passed for reps in results.values() for rep in reps)
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    payload = {
        "graph": {"path": cfg.graph, "vertices": G.num_vertices, "edges": G.num_edges, "deg_max": G.deg_max},
        "config": {k: v for k, v in asdict(cfg).items() if k != "out"},
        "curvature": {"C": st.curvature.C, "K": st.curvature.K, "lambda1": st.lam1, **st.estimate},
        "suites": {name: [report_record(r) for r in reps] for name, reps in results.items()},
        "passed": passed,
    }
    write_json(out / "report.json", payload)
    (out / "summary.csv").write_text(csv_text(summary_rows(results), SUMMARY_COLUMNS), encoding="utf-8")
    for name, reps in results.items():
        rows = [{"condition": r.condition, **case} for r in reps for case in r.cases]
        (out / f"series_{name}.csv").write_text(csv_text(rows), encoding="utf-8")
    return (EXIT_OK if passed else EXIT_FAIL), payload


# -- spectrum and flow ------------------------------------------------------------

def run_spectrum(graph: str, h: float, count: int, seed: int, out=None) -> int:
    out = out or sys.stdout
    if not h > 0 or count < 2:
        raise ConfigError("need h > 0 and count >= 2")
    G = _load(graph)
    ctx = VerificationContext.build(G, h)
    lam = ctx.heat.spectrum.eigenvalues[:count]
    lam1 = lambda1(ctx.grid)
    print("index,eigenvalue", file=out)
    for i, v in enumerate(lam):
        print(f"{i},{v:.10g}", file=out)
    mult = int(np.sum(np.abs(lam[1:] - lam[1]) <= 1e-8 * max(1.0, lam[1])))
    print(f"lambda1 (extrapolated) = {lam1:.10g}, multiplicity {mult}", file=out)
    labels, F = test_basis(ctx, seed=seed)
    est = estimate_C(ctx, lam1, F, RunConfig.t_grid, labels)
    print(f"c(t) = C exp(-K t): C = {est.C:.6g}, K = {lam1:.6g}, floor deg_max - 1 = {est.floor:g}", file=out)
    return EXIT_OK


def _poly_density(ctx: VerificationContext, path: str) -> np.ndarray:
    try:
        coeff_map = yaml.safe_load(Path(path).read_text(encoding="utf-8"))
    except (OSError, yaml.YAMLError) as exc:
        raise ConfigError(f"cannot read density file {path}: {exc}") from exc
    if not isinstance(coeff_map, dict):
        raise ConfigError("density file must map edge index to coefficient lists")
    grid = ctx.grid
    dens = np.ones(grid.size)
    for k, coeffs in coeff_map.items():
        if not (isinstance(k, int) and 0 <= k < ctx.graph.num_edges):
            raise ConfigError(f"bad edge index {k!r}")
        idx = grid.edge_nodes[k]
        dens[idx] = np.polynomial.polynomial.polyval(grid.edge_coords(k), np.asarray(coeffs, dtype=float))
    if np.any(dens < 0) or not np.any(dens > 0):
        raise ConfigError("density must be nonnegative and not identically zero")
    return dens


def run_flow(graph: str, h: float, preset: str, T: float, steps: int, t_min: float,
             out_dir: str, poly: str | None = None) -> int:
    if not (h > 0 and T > 0 and steps > 0 and t_min > 0 and t_min < T):
        raise ConfigError("need h, T, steps, t-min positive and t-min < T")
    G = _load(graph)
    ctx = VerificationContext.build(G, h)
    start = 0.0
    if poly is not None:
        f0 = DiscreteMeasure.from_density(ctx.grid, _poly_density(ctx, poly), normalize=True)
    elif preset == "dirac":
        # entropy of a point mass is infinite; series start at t_min
        f0 = apply_Ht(ctx.heat, DiscreteMeasure.dirac(ctx.grid, G.vertex_point(0)), t_min)
        start = t_min
    else:
        f0 = DiscreteMeasure.from_density(ctx.grid, flow_start(ctx, preset), normalize=True)
    res = gradient_flow_functional(ctx, f0, T - start, steps)
    act = np.concatenate([[0.0], np.cumsum(0.5 * res.speed2 * np.diff(res.times))])
    rows = [
        {"t": start + t, "entropy": e, "fisher": f, "half_action": a, "D_partial": d}
        for t, e, f, a, d in zip(res.times, res.entropy, res.fisher, act, res.D_partial)
    ]
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "flow.csv").write_text(csv_text(rows), encoding="utf-8")
    return EXIT_OK


# -- argument parsing ----------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="mgcurv", description="Weak curvature checks on metric graphs.")
    sub = p.add_subparsers(dest="command", required=True)

    v = sub.add_parser("verify", help="run verification suites")
    v.add_argument("--graph", required=True)
    v.add_argument("--suite", action="append", choices=SUITES + ("all",))
    v.add_argument("--h", type=float, default=RunConfig.h)
    v.add_argument("--t-grid", type=_floats, default=RunConfig.t_grid)
    v.add_argument("--eps-sweep", type=_floats, default=RunConfig.eps_sweep)
    v.add_argument("--seed", type=int, default=0)
    v.add_argument("--force-C", type=float, default=None)
    v.add_argument("--force-K", type=float, default=None)
    v.add_argument("--pairs", type=int, default=RunConfig.pairs)
    v.add_argument("--flow-steps", type=int, default=RunConfig.flow_steps)
    v.add_argument("--tol-a", type=float, default=RunConfig.tol_a)
    v.add_argument("--tol-b", type=float, default=RunConfig.tol_b)
    v.add_argument("--tol-solver", type=float, default=RunConfig.tol_solver)
    v.add_argument("--workers", type=int, default=RunConfig.workers)
    v.add_argument("--out", default=RunConfig.out)

    s = sub.add_parser("spectrum", help="print eigenvalues and the fitted c(t)")
    s.add_argument("--graph", required=True)
    s.add_argument("--h", type=float, default=0.01)
    s.add_argument("--count", type=int, default=8)
    s.add_argument("--seed", type=int, default=0)

    f = sub.add_parser("flow", help="write heat-flow time series")
    f.add_argument("--graph", required=True)
    f.add_argument("--h", type=float, default=RunConfig.h)
    f.add_argument("--preset", choices=("uniform", "cosine", "bump", "dirac"), default="cosine")
    f.add_argument("--poly", default=None, help="YAML file: edge index -> polynomial coefficients in s")
    f.add_argument("--T", type=float, default=0.2)
    f.add_argument("--steps", type=int, default=40)
    f.add_argument("--t-min", type=float, default=0.01)
    f.add_argument("--out", default=RunConfig.out)
    return p


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "verify":
            suites = args.suite or ["all"]
            names = SUITES if "all" in suites else tuple(dict.fromkeys(suites))
            cfg = RunConfig(
                graph=args.graph, suites=tuple(names), h=args.h, t_grid=args.t_grid,
                eps_sweep=args.eps_sweep, seed=args.seed, force_C=args.force_C, force_K=args.force_K,
                pairs=args.pairs, flow_steps=args.flow_steps, tol_a=args.tol_a, tol_b=args.tol_b,
                tol_solver=args.tol_solver, workers=args.workers, out=args.out,
            )
            code, payload = run_verify(cfg)
            for name, reps in payload["suites"].items():
                for r in reps:
                    status = "PASS" if r["passed"] else "FAIL"
                    print(f"{status} {name}/{r['condition']}: worst {r['worst_residual']:.3e} tol {r['tolerance']:.3e}")
                    if not r["passed"]:
                        print(f"     witness: {r['witness']}")
            return code
        if args.command == "spectrum":
            return run_spectrum(args.graph, args.h, args.count, args.seed)
        return run_flow(args.graph, args.h, args.preset, args.T, args.steps, args.t_min, args.out, args.poly)
    except ConfigError as exc:
        print(f"mgcurv: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
