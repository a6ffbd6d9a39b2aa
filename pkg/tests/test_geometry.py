import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from psublap.geometry import (
    GroupSpec,
    Grid,
    apply_dirichlet,
    first_stratum_radius,
    horizontal_divergence,
    horizontal_gradient,
    horizontal_norm,
    make_euclidean,
    make_heisenberg,
    parse_group,
)


def interior(a):
    return a[(slice(1, -1),) * a.ndim]


def test_make_euclidean_shapes():
    g = make_euclidean(2)
    assert (g.N, g.N1, g.stratum_sizes) == (2, 2, (2,))
    assert all(terms == () for terms in g.coefficients)
    g1 = make_euclidean(1)
    assert (g1.N, g1.N1) == (1, 1)


@pytest.mark.parametrize("bad", [0, -1, 1.5])
def test_make_euclidean_rejects(bad):
    with pytest.raises(ValueError):
        make_euclidean(bad)


def test_heisenberg_structure(heis):
    assert (heis.N, heis.N1, heis.stratum_sizes) == (3, 2, (2, 1))
    assert not heis.is_euclidean


def test_group_spec_rejects_bad_target_axis():
    with pytest.raises(ValueError):
        GroupSpec("bad", (2, 1), (((0, lambda x: x[0]),), ()))
    with pytest.raises(ValueError):
        GroupSpec("bad", (2,), ((),))


def test_parse_group():
    assert parse_group("heisenberg").N == 3
    assert parse_group("Euclidean:3").N1 == 3
    with pytest.raises(ValueError):
        parse_group("carnot:7")


def test_grid_invariants():
    g = Grid.box(2, 5)
    assert g.h == pytest.approx(0.25)
    assert g.size == 25
    with pytest.raises(ValueError):
        Grid((0, 0), (1, 1), (2, 5))
    with pytest.raises(ValueError):
        Grid((0, 0), (1, 2), (5, 5))  # non-uniform spacing
    with pytest.raises(ValueError):
        Grid((0,), (1, 1), (5, 5))


def test_quadrature_weights_integrate_constants_exactly():
    g = Grid.box(3, 9)
    assert g.quadrature_weights().sum() == pytest.approx(1.0, rel=1e-14)


def test_boundary_mask_and_dirichlet():
    g = Grid.box(2, 5)
    m = g.boundary_mask()
    assert m.sum() == 16
    u = apply_dirichlet(g, np.ones(g.extents))
    assert u[m].max() == 0 and u[~m].min() == 1
    # the returned mask is a copy
    m[:] = False
    assert g.boundary_mask().sum() == 16


def test_euclidean_gradient_of_linear_is_exact(euclid2):
    g = Grid.box(2, 9)
    x1, _ = g.coords()
    gx, gy = horizontal_gradient(euclid2, g, x1)
    np.testing.assert_allclose(gx, 1.0, atol=1e-13)
    np.testing.assert_allclose(gy, 0.0, atol=1e-13)


def test_euclidean_3d_gradient_is_full_gradient():
    e3 = make_euclidean(3)
    g = Grid.box(3, 9)
    u = np.sin(g.coords()[0]) * g.coords()[1] + g.coords()[2] ** 2
    for k, gk in enumerate(horizontal_gradient(e3, g, u)):
        np.testing.assert_array_equal(gk, np.gradient(u, g.h, axis=k, edge_order=2))


def test_heisenberg_fields_on_coordinate_functions(heis):
    g = Grid.box(3, 9)
    x1, x2, x3 = g.coords()
    X1, X2 = horizontal_gradient(heis, g, x3)
    np.testing.assert_allclose(X1, -x2 / 2, atol=1e-13)
    np.testing.assert_allclose(X2, x1 / 2, atol=1e-13)
    X1, X2 = horizontal_gradient(heis, g, x1)
    np.testing.assert_allclose(X1, 1.0, atol=1e-13)
    np.testing.assert_allclose(X2, 0.0, atol=1e-13)


def test_heisenberg_gradient_of_radial_square(heis):
    g = Grid.box(3, 17)
    rho = first_stratum_radius(heis, g)
    norm = horizontal_norm(horizontal_gradient(heis, g, rho ** 2))
    np.testing.assert_allclose(interior(norm), interior(2 * rho), atol=1e-12)


def test_heisenberg_commutator_is_d3(heis):
    g = Grid.box(3, 65)
    x1, x2, x3 = g.coords()
    f = np.sin(x1 + 2 * x3) * np.cos(x2) + x3 ** 3
    X1f, X2f = horizontal_gradient(heis, g, f)
    X2X1f = horizontal_gradient(heis, g, X1f)[1]
    X1X2f = horizontal_gradient(heis, g, X2f)[0]
    d3f = 2 * np.cos(x1 + 2 * x3) * np.cos(x2) + 3 * x3 ** 2
    inner = (slice(3, -3),) * 3
    np.testing.assert_allclose((X1X2f - X2X1f)[inner], d3f[inner], atol=5e-3)


def test_heisenberg_matches_symbolic_oracle_at_second_order(heis):
    # X1 f = d1 f - x2/2 d3 f for f = exp(x1) sin(x3) + x2 x3
    errs = []
    for n in (17, 33, 65):
        g = Grid.box(3, n)
        x1, x2, x3 = g.coords()
        f = np.exp(x1) * np.sin(x3) + x2 * x3
        X1 = horizontal_gradient(heis, g, f)[0]
        exact = np.exp(x1) * np.sin(x3) - x2 / 2 * (np.exp(x1) * np.cos(x3) + x2)
        errs.append(np.abs(X1 - exact).max())
    orders = np.log2(np.array(errs[:-1]) / np.array(errs[1:]))
    assert orders.min() > 1.8


def test_divergence_of_position_is_two(euclid2):
    g = Grid.box(2, 9)
    np.testing.assert_allclose(horizontal_divergence(euclid2, g, g.coords()), 2.0, atol=1e-12)


def test_heisenberg_sublaplacian_of_radial_square(heis):
    g = Grid.box(3, 17)
    rho2 = first_stratum_radius(heis, g) ** 2
    lap = horizontal_divergence(heis, g, horizontal_gradient(heis, g, rho2))
    np.testing.assert_allclose(lap, 4.0, atol=1e-10)


def test_divergence_component_count(euclid2):
    g = Grid.box(2, 9)
    with pytest.raises(ValueError):
        horizontal_divergence(euclid2, g, [g.zeros()])


def test_gradient_rejects_dimension_mismatch(heis):
    with pytest.raises(ValueError):
        horizontal_gradient(heis, Grid.box(2, 9), np.zeros((9, 9)))


def test_horizontal_weight(heis, euclid2):
    g = Grid.box(3, 9)
    # 1 + (x2/2)^2 + 1 + (x1/2)^2 at a corner
    assert heis.horizontal_weight(g) == pytest.approx(2 + 2 * 0.0625)
    assert euclid2.horizontal_weight(Grid.box(2, 9)) == 2.0


@settings(max_examples=40, deadline=None)
@given(a=st.floats(-5, 5), b=st.floats(-5, 5), seed=st.integers(0, 2 ** 16))
def test_gradient_is_linear(a, b, seed):
    heis = make_heisenberg()
    g = Grid.box(3, 7)
    r = np.random.default_rng(seed)
    u, v = r.normal(size=g.extents), r.normal(size=g.extents)
    lhs = horizontal_gradient(heis, g, a * u + b * v)
    rhs = [a * gu + b * gv for gu, gv in zip(horizontal_gradient(heis, g, u), horizontal_gradient(heis, g, v))]
    for x, y in zip(lhs, rhs):
        np.testing.assert_allclose(x, y, atol=1e-9)
