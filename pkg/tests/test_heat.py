import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import make_graph
from mgcurv.errors import NonpositiveTime
from mgcurv.fields import DiscreteMeasure, GridFunction
from mgcurv.functionals import dirichlet_energy
from mgcurv.graph import discretize
from mgcurv.heat import (
    HeatKernelEvaluator,
    apply_Ht,
    apply_Pt,
    assemble_laplacian,
    eigendecompose,
    gaussian_bound_constant,
    heat_kernel,
)

NAMES = ["interval", "circle", "star", "lollipop"]


@pytest.fixture(scope="module")
def evaluators():
    return {n: HeatKernelEvaluator.for_grid(discretize(make_graph(n), 0.04)) for n in NAMES}


# -- Laplacian ------------------------------------------------------------------

@pytest.mark.parametrize("name", NAMES)
def test_laplacian_kills_constants(name):
    L = assemble_laplacian(discretize(make_graph(name), 0.1))
    assert np.all(L.apply(np.full(L.grid.size, 3.7)) == 0.0)


def test_laplacian_cosine_on_interval():
    grid = discretize(make_graph("interval"), 1 / 400)
    x = grid.node_s + 0.5
    f = np.cos(np.pi * x)
    Lf = assemble_laplacian(grid).apply(f)
    np.testing.assert_allclose(Lf, np.pi**2 * f, atol=1e-3 * np.pi**2)


def test_laplacian_hub_stencil(star):
    L = assemble_laplacian(discretize(star, 0.25))
    hub = star.vertex_index("hub")
    assert L.stiffness[hub].nnz == star.degree[hub] + 1


@pytest.mark.parametrize("name", NAMES)
def test_laplacian_mass_symmetric(name):
    L = assemble_laplacian(discretize(make_graph(name), 0.1))
    K = L.stiffness.toarray()
    np.testing.assert_array_equal(K, K.T)
    np.testing.assert_allclose(K.sum(axis=1), 0.0, atol=1e-12)
    # <L f, g>_M = <f, L g>_M
    rng = np.random.default_rng(0)
    f, g = rng.standard_normal((2, L.grid.size))
    assert (L.mass * L.apply(f)) @ g == pytest.approx((L.mass * f) @ L.apply(g), rel=1e-12)


# -- spectrum -------------------------------------------------------------------

def test_interval_spectrum():
    sd = eigendecompose(assemble_laplacian(discretize(make_graph("interval"), 1 / 200)), m=3)
    np.testing.assert_allclose(sd.eigenvalues, [0.0, np.pi**2, 4 * np.pi**2], rtol=1e-4, atol=1e-12)


def test_interval_spectrum_scales_with_length():
    from mgcurv.graph import build_graph

    G = build_graph({"vertices": [0, 1], "edges": [{"tail": 0, "head": 1, "length": 2.0}]})
    sd = eigendecompose(assemble_laplacian(discretize(G, 1 / 100)), m=3)
    np.testing.assert_allclose(sd.eigenvalues[1:], [(np.pi / 2) ** 2, np.pi**2], rtol=1e-4)


def test_circle_spectrum_double():
    sd = eigendecompose(assemble_laplacian(discretize(make_graph("circle"), 1 / 200)), m=5)
    lam = sd.eigenvalues
    np.testing.assert_allclose(lam[1:3], 4 * np.pi**2, rtol=1e-3)
    np.testing.assert_allclose(lam[3:5], 16 * np.pi**2, rtol=1e-3)
    assert lam[2] - lam[1] == pytest.approx(0.0, abs=1e-8)


@pytest.mark.parametrize("name", NAMES)
def test_ground_state(name):
    sd = eigendecompose(assemble_laplacian(discretize(make_graph(name), 0.05)))
    assert sd.eigenvalues[0] == 0.0
    phi0 = sd.eigenvectors[:, 0]
    np.testing.assert_allclose(phi0, phi0[0], rtol=1e-9)
    assert sd.lambda1 > 0
    gram = sd.eigenvectors.T @ (sd.mass[:, None] * sd.eigenvectors)
    np.testing.assert_allclose(gram, np.eye(sd.size), atol=1e-10)
    assert sd.residual <= 1e-10
    assert not sd.truncated and sd.tail_bound(0.1) == 0.0


def test_truncated_spectrum_tail_bound():
    sd = eigendecompose(assemble_laplacian(discretize(make_graph("star"), 0.05)), m=10)
    assert sd.truncated
    assert sd.tail_bound(1.0) == pytest.approx(math.exp(-sd.eigenvalues[-1]))


def test_eigendecompose_rejects_bad_count():
    L = assemble_laplacian(discretize(make_graph("interval"), 0.25))
    with pytest.raises(ValueError):
        eigendecompose(L, m=0)


def test_lambda1_refinement_order():
    G = make_graph("interval")
    hs = [1 / 20, 1 / 40, 1 / 80, 1 / 160]
    errs = [abs(eigendecompose(assemble_laplacian(discretize(G, h)), m=2).lambda1 - np.pi**2) for h in hs]
    orders = np.log2(np.array(errs[:-1]) / np.array(errs[1:]))
    assert orders.min() >= 1.8


# -- kernel and semigroup ------------------------------------------------------------

@pytest.mark.parametrize("name", NAMES)
@pytest.mark.parametrize("t", [1e-3, 0.05, 1.0])
def test_kernel_mass_and_symmetry(evaluators, name, t):
    H = evaluators[name]
    K = H.kernel_matrix(t)
    np.testing.assert_allclose(K @ H.grid.weights, 1.0, atol=1e-10)
    np.testing.assert_allclose(K, K.T, atol=1e-12)


@pytest.mark.parametrize("name", NAMES)
def test_kernel_off_node(evaluators, name, rng):
    from mgcurv.curvature import random_point

    H = evaluators[name]
    G = H.grid.graph
    for _ in range(5):
        x, y = random_point(G, rng), random_point(G, rng)
        t = float(rng.uniform(0.01, 0.5))
        assert heat_kernel(H, t, x, y) == pytest.approx(heat_kernel(H, t, y, x), abs=1e-12)
        assert H.grid.weights @ H.column(t, x) == pytest.approx(1.0, abs=1e-10)


def test_kernel_needs_positive_time(evaluators):
    H = evaluators["star"]
    p = H.grid.node_point(0)
    with pytest.raises(NonpositiveTime):
        heat_kernel(H, 0.0, p, p)
    with pytest.raises(NonpositiveTime):
        H.kernel_matrix(-1.0)
    with pytest.raises(NonpositiveTime):
        apply_Ht(H, DiscreteMeasure.uniform(H.grid), -0.1)


@pytest.mark.parametrize("name", NAMES)
def test_kernel_tends_to_uniform(evaluators, name):
    H = evaluators[name]
    K = H.kernel_matrix(50.0)
    np.testing.assert_allclose(K, 1.0 / H.grid.graph.total_length, rtol=1e-10)


@pytest.mark.parametrize("name", NAMES)
def test_kernel_positivity_report(evaluators, name):
    # nonnegative up to round-off for this scheme
    assert evaluators[name].kernel_matrix(1e-3).min() >= -1e-10


def test_gaussian_bound_constant_is_finite(evaluators):
    c = gaussian_bound_constant(evaluators["star"], [0.01, 0.1, 1.0])
    assert np.isfinite(c) and c > 0


def test_Pt_identity_and_constants(evaluators):
    H = evaluators["lollipop"]
    f = GridFunction(H.grid, np.random.default_rng(1).standard_normal(H.grid.size))
    np.testing.assert_array_equal(apply_Pt(H, f, 0.0).values, f.values)
    c = GridFunction.constant(H.grid, 2.5)
    for t in (0.01, 0.3, 4.0):
        np.testing.assert_allclose(apply_Pt(H, c, t).values, 2.5, rtol=1e-12)


@pytest.mark.parametrize("name", NAMES)
@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 2**31), s=st.floats(0.001, 0.5), t=st.floats(0.001, 0.5))
def test_semigroup_law(evaluators, name, seed, s, t):
    H = evaluators[name]
    f = np.random.default_rng(seed).standard_normal(H.grid.size)
    np.testing.assert_allclose(H.apply(H.apply(f, t), s), H.apply(f, s + t), atol=1e-10)


@pytest.mark.parametrize("name", NAMES)
@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 2**31), t=st.floats(0.0, 2.0))
def test_mass_and_maximum_principle(evaluators, name, seed, t):
    H = evaluators[name]
    f = np.random.default_rng(seed).standard_normal(H.grid.size)
    w = H.grid.weights
    g = H.apply(f, t)
    assert abs(w @ g - w @ f) <= 1e-10 * (w @ np.abs(f))
    assert g.max() <= f.max() + 1e-10 and g.min() >= f.min() - 1e-10


@pytest.mark.parametrize("name", NAMES)
def test_smoothing_energy_decreases(evaluators, name):
    H = evaluators[name]
    f = np.random.default_rng(5).standard_normal(H.grid.size)
    energies = [dirichlet_energy(GridFunction(H.grid, H.apply(f, t))) for t in (0.001, 0.01, 0.05, 0.2, 1.0)]
    assert np.all(np.isfinite(energies))
    assert np.all(np.diff(energies) <= 1e-12)


def test_Ht_of_hub_dirac(star):
    H = HeatKernelEvaluator.for_grid(discretize(star, 0.02))
    hub = star.vertex_index("hub")
    mu = DiscreteMeasure.dirac(H.grid, star.vertex_point(hub))
    out = apply_Ht(H, mu, 0.005)
    assert out.total_mass() == pytest.approx(1.0, abs=1e-8)
    assert not out.has_atoms
    d = H.grid.distance_matrix[hub]
    assert out.node_masses()[d <= 0.3].sum() > 0.99
    assert int(np.argmax(out.density)) == hub


def test_Ht_identity_and_uniform(evaluators):
    H = evaluators["circle"]
    mu = DiscreteMeasure.uniform(H.grid)
    assert apply_Ht(H, mu, 0.0) is mu
    for t in (0.01, 1.0):
        np.testing.assert_allclose(apply_Ht(H, mu, t).density, mu.density, rtol=1e-10)


def test_Ht_atom_matches_kernel_column(evaluators, rng):
    from mgcurv.curvature import random_point

    H = evaluators["lollipop"]
    for _ in range(4):
        p = random_point(H.grid.graph, rng)
        out = apply_Ht(H, DiscreteMeasure.dirac(H.grid, p), 0.1)
        np.testing.assert_allclose(out.density, np.maximum(H.column(0.1, p), 0), atol=1e-10)
