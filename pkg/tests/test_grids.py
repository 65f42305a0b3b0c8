import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from artifact.grids import (Symmetry, WeightParams, axis_rule, build_spatial_grid, build_velocity_grid, maxwellian,
                            sqrt_maxwellian, symmetrize_R, w_weight)


@given(st.integers(2, 12), st.integers(0, 23))
def test_gauss_rule_exact_to_degree_2n_minus_1(n, k):
    if k > 2 * n - 1:
        return
    x, w = axis_rule(2.0, n, "gauss")
    exact = 0.0 if k % 2 else 2 * 2.0 ** (k + 1) / (k + 1)
    assert np.isclose(w @ x**k, exact, rtol=1e-12, atol=1e-12 * 2.0**k)


def test_midpoint_rule_is_symmetric_and_sums_to_width():
    x, w = axis_rule(6.0, 16, "uniform")
    assert np.allclose(x, -x[::-1])
    assert np.isclose(w.sum(), 12.0)


def test_unknown_scheme_rejected():
    with pytest.raises(ValueError):
        axis_rule(1.0, 4, "simpson")


@pytest.mark.parametrize("n", [5, 7, 15])
def test_odd_count_rejected_with_grazing_message(n):
    with pytest.raises(ValueError, match="grazing"):
        build_velocity_grid(6.0, n)


def test_grazing_node_detected():
    g = build_velocity_grid(6.0, 8)
    with pytest.raises(ValueError, match="grazing"):
        g.check_no_grazing(-g.axes[0][3])
    g.check_no_grazing(0.02)


def test_maxwellian_moments_on_grid():
    g = build_velocity_grid(6.0, 16)
    M = maxwellian(1.3, 0.2, 0.9, g.nodes)
    assert np.isclose(g.integrate(M), 1.3, rtol=1e-6)
    assert np.isclose(g.integrate(M * g.nodes[:, 0]), 1.3 * 0.2, rtol=1e-6)


def test_sqrt_maxwellian_squares_to_standard_maxwellian():
    v = np.random.default_rng(0).normal(size=(50, 3))
    assert np.allclose(sqrt_maxwellian(v) ** 2, maxwellian(1.0, 0.0, 1.0, v))


def test_weight_bounds():
    with pytest.raises(ValueError):
        w_weight(np.zeros((1, 3)), 0.25)
    with pytest.raises(ValueError):
        WeightParams(theta=0.1, theta_tilde=0.02)
    assert w_weight(np.array([[1.0, 2.0, 0.0]]), 0.1)[0] == pytest.approx(np.exp(0.5))


@settings(max_examples=30, deadline=None)
@given(st.floats(10.0, 1e5), st.integers(20, 300), st.floats(1.0, 1.3))
def test_spatial_grid_is_graded_and_monotone(L, cells, ratio):
    try:
        s = build_spatial_grid(L, cells, ratio, 1e-4)
    except ValueError:
        return  # unreachable length at this grading is reported, not silently stretched
    h = s.widths
    assert s.nodes[0] == 0.0 and s.L == pytest.approx(L)
    assert s.cells == cells
    assert np.all(np.diff(h) >= -1e-9 * h[1:])
    assert s.trapezoid_weights().sum() == pytest.approx(L)


def test_refined_grid_bisects():
    s = build_spatial_grid(100.0, 40)
    r = s.refined()
    assert r.cells == 80
    assert np.array_equal(r.nodes[::2], s.nodes)


@pytest.mark.parametrize("kind", ["none", "R", "axial"])
def test_symmetry_restrict_expand(kind, rng):
    g = build_velocity_grid(4.0, 6)
    sym = Symmetry(g, kind)
    f = rng.normal(size=g.size)
    p = sym.project(f)
    assert np.allclose(sym.project(p), p)
    assert sym.defect(p) < 1e-14
    # orbit weights carry the full quadrature
    assert np.isclose(sym.weights.sum(), g.weights.sum())
    assert np.isclose(sym.inner(sym.restrict(p), sym.restrict(p)), g.inner(p, p))


def test_reflection_average_is_R_invariant(rng):
    g = build_velocity_grid(4.0, 6)
    f = symmetrize_R(g, rng.normal(size=g.size))
    assert np.allclose(f, f[g.perm_R])
