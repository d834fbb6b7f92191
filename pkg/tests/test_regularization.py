import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import make_graph
from mgcurv.curvature import gaussian_bump, random_point
from mgcurv.fields import DiscreteMeasure, GridFunction
from mgcurv.functionals import entropy, gradient
from mgcurv.graph import discretize
from mgcurv.heat import HeatKernelEvaluator, apply_Ht
from mgcurv.regularization import (
    action_transfer_check,
    bump,
    limsup_trend,
    make_regularization_map,
    mollifier_weights,
    mollify_in_time,
    regularize_function,
    regularize_measure,
    regularized_gradient,
    strongly_regular_approx,
)
from mgcurv.transport import MeasureCurve, length, w2, wasserstein_geodesic
from oracles import adjoint_quadrature_tolerance

NAMES = ["interval", "circle", "star", "lollipop"]


@pytest.fixture(scope="module")
def maps():
    out = {}
    for name in NAMES:
        grid = discretize(make_graph(name), 0.02)
        for eps in (0.1, 0.03):
            out[name, eps] = make_regularization_map(grid, eps)
    return out


def probe_measures(grid, rng):
    G = grid.graph
    yield gaussian_bump(grid, random_point(G, rng), 0.1)
    yield DiscreteMeasure.from_atoms(grid, [random_point(G, rng) for _ in range(3)], [0.2, 0.3, 0.5])
    for v in range(G.num_vertices):
        yield DiscreteMeasure.dirac(grid, G.vertex_point(v))
    yield DiscreteMeasure.uniform(grid)


def smooth_target_function(rmap):
    D = rmap.target.distance_matrix
    return np.cos(2 * D[0]) + 0.3 * np.sin(5 * D[-1])


# -- the map --------------------------------------------------------------------

def test_map_matches_extension(maps):
    rmap = maps["star", 0.1]
    G = rmap.source.graph
    assert rmap.eps == 0.1
    assert rmap.target.graph.num_edges == G.num_edges + G.num_vertices
    assert np.all(rmap.alpha > 1)
    np.testing.assert_allclose(rmap.alpha, (G.lengths + 0.2) / G.lengths)
    # original edges keep the source nodes
    for k in range(G.num_edges):
        assert rmap.target.n[k] == rmap.source.n[k]


# -- functions --------------------------------------------------------------------

@pytest.mark.parametrize("name", NAMES)
def test_constant_function_fixed(maps, name):
    rmap = maps[name, 0.03]
    out = regularize_function(np.ones(rmap.target.size), rmap)
    np.testing.assert_allclose(out.values, 1.0, atol=1e-14)


def test_linear_function_midpoint():
    # phi(z) = z along the line of the single edge; window inside the edge
    G = make_graph("interval")
    rmap = make_regularization_map(discretize(G, 0.01), 0.05)
    T = rmap.target
    line = rmap.lines[0]
    phi = np.zeros(T.size)
    phi[line.flat] = line.z
    out = regularize_function(phi, rmap).values
    y = rmap.source.edge_coords(0)
    a = rmap.alpha[0]
    inside = np.abs(a * y) <= 0.5 - 0.05
    np.testing.assert_allclose(out[rmap.source.edge_nodes[0]][inside], a * y[inside], atol=1e-13)


@pytest.mark.parametrize("name", NAMES)
def test_uniform_convergence(name):
    G = make_graph(name)
    grid = discretize(G, 0.005)
    errs = []
    for eps in (0.2, 0.1, 0.05, 0.025):
        rmap = make_regularization_map(grid, eps)
        phi_T = np.cos(3 * rmap.target.distance_matrix[0])
        phi_G = np.cos(3 * grid.distance_matrix[0])
        errs.append(np.abs(regularize_function(phi_T, rmap).values - phi_G).max())
    assert np.all(np.diff(errs) < 0)
    assert errs[-1] <= 0.2


@pytest.mark.parametrize("name", NAMES)
def test_regularized_gradient_is_derivative(name):
    G = make_graph(name)
    rmap = make_regularization_map(discretize(G, 0.0025), 0.05)
    phi = smooth_target_function(rmap)
    direct = regularized_gradient(phi, rmap).flatten()
    numeric = gradient(regularize_function(phi, rmap)).flatten()
    assert np.abs(direct - numeric).max() <= 0.02 * np.abs(direct).max()


# -- measures ---------------------------------------------------------------------

@pytest.mark.parametrize("name", NAMES)
@pytest.mark.parametrize("eps", [0.1, 0.03])
def test_mass_cap_adjointness(maps, name, eps, rng):
    rmap = maps[name, eps]
    phi = smooth_target_function(rmap)
    phi_eps = regularize_function(phi, rmap).values
    cap = 1.0 / (2 * eps)
    for mu in probe_measures(rmap.source, rng):
        me = regularize_measure(mu, rmap)
        assert not me.has_atoms
        assert abs(me.total_mass() - mu.total_mass()) <= 1e-12
        assert me.density.max() <= cap * (1 + 1e-12)
        resid = abs(me.integrate(phi) - mu.integrate(phi_eps))
        assert resid <= adjoint_quadrature_tolerance(mu, phi_eps)


@pytest.mark.parametrize("name", NAMES)
def test_vertex_dirac_fills_pendant(maps, name):
    rmap = maps[name, 0.1]
    G = rmap.source.graph
    T = rmap.target
    for v in range(G.num_vertices):
        me = regularize_measure(DiscreteMeasure.dirac(rmap.source, G.vertex_point(v)), rmap)
        pend = T.edge_nodes[rmap.ext.pendant[v]]
        np.testing.assert_allclose(me.density[pend[1:]], 1 / 0.2, rtol=1e-12)
        # the vertex node itself is shared with the edges: half a hat lies on the pendant
        others = np.setdiff1d(np.arange(T.size), pend)
        assert np.all(me.density[others] == 0.0)


@pytest.mark.parametrize("name", NAMES)
@settings(max_examples=10, deadline=None)
@given(seed=st.integers(0, 2**31), a=st.floats(0.0, 3.0), b=st.floats(0.0, 3.0))
def test_linearity(maps, name, seed, a, b):
    rmap = maps[name, 0.03]
    rng = np.random.default_rng(seed)
    mus = list(probe_measures(rmap.source, rng))
    mu, nu = mus[0], mus[1]
    mix = DiscreteMeasure.mixture([a, b], [mu, nu])
    lhs = regularize_measure(mix, rmap).density
    rhs = a * regularize_measure(mu, rmap).density + b * regularize_measure(nu, rmap).density
    np.testing.assert_allclose(lhs, rhs, rtol=1e-12, atol=1e-12)


def test_regularize_measure_wrong_grid(maps):
    rmap = maps["star", 0.1]
    other = discretize(rmap.source.graph, 0.02)
    with pytest.raises(ValueError):
        regularize_measure(DiscreteMeasure.uniform(other), rmap)


# -- action transfer -----------------------------------------------------------------

def dirac_geodesic(grid, x, y, n=9):
    times = np.linspace(0.0, 1.0, n)
    mu0, mu1 = DiscreteMeasure.dirac(grid, x), DiscreteMeasure.dirac(grid, y)
    _, plan = w2(mu0, mu1)
    return MeasureCurve(times, tuple(wasserstein_geodesic(mu0, mu1, float(s), plan) for s in times))


def test_action_transfer_constant_curve(maps):
    rmap = maps["star", 0.1]
    mu = DiscreteMeasure.uniform(rmap.source)
    rep = action_transfer_check(MeasureCurve([0.0, 0.5, 1.0], (mu, mu, mu)), rmap)
    assert rep.passed and rep.max_ratio == 0.0


def test_action_transfer_single_edge():
    G = make_graph("star")
    eps = G.min_length / 10
    grid = discretize(G, eps / 8)
    rmap = make_regularization_map(grid, eps)
    curve = dirac_geodesic(grid, G.point(1, -0.4), G.point(1, 0.4))
    rep = action_transfer_check(curve, rmap)
    assert rep.bound == pytest.approx(1.2)
    assert rep.passed
    assert rep.worst_excess <= 0


@pytest.mark.parametrize("name", ["interval", "star", "lollipop"])
def test_action_transfer_eps_sweep(name):
    G = make_graph(name)
    eps_list = (0.2, 0.1, 0.05, 0.025)
    grid = discretize(G, eps_list[-1] / 4)
    D = grid.distance_matrix
    i, j = np.unravel_index(int(np.argmax(D)), D.shape)
    curve = dirac_geodesic(grid, grid.node_point(int(i)), grid.node_point(int(j)))
    maxima = []
    for eps in eps_list:
        rep = action_transfer_check(curve, make_regularization_map(grid, eps))
        assert rep.passed, rep
        maxima.append(rep.max_ratio)
    assert limsup_trend(eps_list, maxima) <= 1.02


def test_limsup_trend_intercept():
    assert limsup_trend([0.2, 0.1], [1.2, 1.1]) == pytest.approx(1.0)
    assert limsup_trend([0.1], [1.3]) == 1.3


# -- time mollification --------------------------------------------------------------

def test_bump_support():
    tau = np.linspace(-1.5, 1.5, 31)
    b = bump(tau)
    assert np.all(b[np.abs(tau) >= 1] == 0) and np.all(b[np.abs(tau) < 1] > 0)


@pytest.mark.parametrize("k", [0.5, 2.0, 8.0, 100.0])
def test_mollifier_weights_stochastic(k):
    W = mollifier_weights(np.linspace(0, 1, 11), k)
    assert W.min() >= 0
    np.testing.assert_allclose(W.sum(axis=1), 1.0, rtol=1e-14)


def test_mollifier_weights_needs_uniform_times():
    with pytest.raises(ValueError):
        mollifier_weights(np.array([0.0, 0.1, 0.5]), 2.0)
    np.testing.assert_array_equal(mollifier_weights(np.array([0.3]), 2.0), [[1.0]])


def test_mollify_constant_curve(maps):
    mu = gaussian_bump(maps["star", 0.1].source, make_graph("star").point(0, 0.1), 0.2)
    curve = MeasureCurve(np.linspace(0, 1, 6), (mu,) * 6)
    out = mollify_in_time(curve, 3.0)
    for m in out.measures:
        np.testing.assert_allclose(m.density, mu.density, rtol=1e-13)


@pytest.fixture(scope="module")
def regularized_curve():
    G = make_graph("star")
    grid = discretize(G, 0.02)
    rmap = make_regularization_map(grid, 0.1)
    curve = dirac_geodesic(grid, G.vertex_point(1), G.point(2, 0.3), n=17)
    return MeasureCurve(curve.times, tuple(regularize_measure(mu, rmap) for mu in curve.measures))


def test_mollified_curve_converges(regularized_curve):
    errs = []
    for k in (1.0, 2.0, 4.0, 8.0):
        moll = mollify_in_time(regularized_curve, k)
        errs.append(max(w2(a, b)[0] for a, b in zip(moll.measures, regularized_curve.measures)))
    assert np.all(np.diff(errs) < 0)


@pytest.mark.parametrize("k", [1.0, 3.0])
def test_mollifier_jensen_bounds(regularized_curve, k):
    W = mollifier_weights(regularized_curve.times, k)
    moll = mollify_in_time(regularized_curve, k)
    ents = np.array([entropy(m) for m in regularized_curve.measures])
    for i in (0, 5, 8, 16):
        assert entropy(moll.measures[i]) <= W[i] @ ents + 1e-12
        d2 = np.array([w2(regularized_curve.measures[i], m)[0] ** 2 for m in regularized_curve.measures])
        assert w2(moll.measures[i], regularized_curve.measures[i])[0] ** 2 <= W[i] @ d2 + 1e-9


# -- strongly regular approximation -------------------------------------------------

@pytest.fixture(scope="module")
def star_dirac_curve():
    G = make_graph("star")
    grid = discretize(G, 0.01)
    return dirac_geodesic(grid, G.vertex_point(1), G.point(1, 0.2))


def test_strongly_regular_outputs(star_dirac_curve):
    for n in (4, 16):
        sr = strongly_regular_approx(star_dirac_curve, n)
        assert sr.densities.min() >= 0
        assert sr.densities.max() <= n / 2 * (1 + 1e-12)
        np.testing.assert_allclose(sr.densities @ sr.grid.weights, 1.0, atol=1e-12)
        assert sr.derivatives.shape == (len(sr.times) - 1, sr.grid.size)
        assert np.all(np.isfinite(sr.derivatives))


def test_strongly_regular_entropy_limit(star_dirac_curve):
    curve = star_dirac_curve
    grid = curve.measures[0].grid
    H = HeatKernelEvaluator.for_grid(grid)
    picks = {0.0: 0, 0.5: 4, 1.0: 8}
    ref = {s: entropy(apply_Ht(H, curve.measures[i], 0.1)) for s, i in picks.items()}
    worst = []
    for n in (4, 8, 16, 32):
        sr = strongly_regular_approx(curve, n)
        Hn = HeatKernelEvaluator.for_grid(sr.grid)
        reg = sr.curve()
        worst.append(max(abs(entropy(apply_Ht(Hn, reg.measures[i], 0.1)) - ref[s]) for s, i in picks.items()))
    assert np.all(np.diff(worst) < 0)
    assert worst[-1] <= 0.06


def test_strongly_regular_length_limsup(star_dirac_curve):
    base = length(star_dirac_curve)
    lens = [length(strongly_regular_approx(star_dirac_curve, n).curve()) for n in (8, 16, 32, 64)]
    assert np.all(np.diff(lens) < 0)
    # excess over the original length shrinks like 1/n
    assert lens[-1] - base <= 0.05
