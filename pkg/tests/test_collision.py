import numpy as np
import pytest

from artifact.collision import (GammaEvaluator, assemble_collision, collision_frequency, collision_frequency_closed,
                                collision_invariants, frequency_bounds, grad_kernel, interpolate_field,
                                kernel_residuals, operator_key, self_cell_average)
from artifact.grids import build_velocity_grid, sqrt_maxwellian


def test_frequency_closed_form_matches_quadrature():
    v = np.array([[0.0, 0, 0], [0.3, 0, 0], [1.0, 1.0, 0], [4.0, 2.0, 1.0]])
    assert np.allclose(collision_frequency(v), collision_frequency_closed(v), rtol=1e-10)


def test_frequency_at_rest_and_bounds():
    # nu(0) = 2 pi * 2 sqrt(2/pi)
    assert collision_frequency_closed(np.zeros(3)) == pytest.approx(4 * np.sqrt(2 * np.pi), rel=1e-14)
    nu0, nu1 = frequency_bounds(collision_frequency_closed, 6 * np.sqrt(3))
    assert nu0 == pytest.approx(5.2025, abs=1e-4)
    assert nu1 == pytest.approx(10.0265, abs=1e-4)


def test_frequency_large_speed_asymptote():
    # erf -> 1 and the Gaussian term vanishes: nu = 2 pi (a + 1/a)
    a = np.array([20.0, 40.0])
    nu = collision_frequency_closed(np.stack([a, 0 * a, 0 * a], axis=1))
    assert np.allclose(nu, 2 * np.pi * (a + 1 / a), rtol=1e-14)


def test_grad_kernel_symmetric_and_singular_at_diagonal(rng):
    a, b = rng.normal(size=(20, 3)), rng.normal(size=(20, 3))
    assert np.allclose(grad_kernel(a, b, -0.3, 1.2), grad_kernel(b, a, -0.3, 1.2), rtol=1e-14)
    with pytest.raises(ValueError):
        grad_kernel(a[0], a[0])


def test_self_cell_average_matches_ball_quadrature(rng):
    # Monte Carlo over the ball as an independent estimate of the singular mean
    xi = np.array([[0.4, -0.2, 0.1]])
    vol = np.array([0.05])
    R = np.cbrt(3 * vol[0] / (4 * np.pi))
    d = rng.normal(size=(400_000, 3))
    d *= (R * rng.random(400_000) ** (1 / 3) / np.linalg.norm(d, axis=1))[:, None]
    mc = grad_kernel(xi, xi + d, 1.0, 1.0).mean()
    assert self_cell_average(xi, vol, 1.0, 1.0)[0] == pytest.approx(mc, rel=1e-2)


def test_operator_symmetry_and_cache(tmp_path):
    g = build_velocity_grid(6.0, 8)
    op = assemble_collision(g, "physical", tmp_path)
    assert np.array_equal(op.kmat, op.kmat.T)
    again = assemble_collision(g, "physical", tmp_path)
    assert again.meta["cache"] == op.meta["cache"]
    assert np.array_equal(again.kmat, op.kmat)
    assert op.key() == operator_key(g, "physical") != operator_key(g, "normalized")
    assert operator_key(build_velocity_grid(6.0, 10), "physical") != op.key()


@pytest.mark.parametrize("radius, n", [(5.0, 12), (6.0, 10)])
def test_kernel_is_bitwise_symmetric(radius, n):
    op = assemble_collision(build_velocity_grid(radius, n), "physical")
    assert np.array_equal(op.kmat, op.kmat.T)


def test_invariants_nearly_in_kernel():
    op = assemble_collision(build_velocity_grid(6.0, 12), "physical")
    assert np.all(kernel_residuals(op) < 0.1)


def test_invariants_shape():
    g = build_velocity_grid(6.0, 6)
    assert collision_invariants(g).shape == (5, g.size)


@pytest.mark.parametrize("method", ["product", "mc"])
def test_gamma_vanishes_on_maxwellian(method):
    # Q(M, M) = 0, so Gamma(sqrt M, sqrt M) = 0 away from the truncation edge
    g = build_velocity_grid(6.0, 10)
    ge = GammaEvaluator(g, method=method, samples=2048, seed=3)
    sm = sqrt_maxwellian(g.nodes)
    out = ge(sm)
    inner = g.speed < 2.0
    scale = np.max(np.abs(ge.loss(sm)[0][inner]))
    assert np.max(np.abs(out[inner])) < 0.1 * scale


def test_gamma_is_symmetric_bilinear(rng):
    g = build_velocity_grid(5.0, 6)
    ge = GammaEvaluator(g, method="product")
    sm = sqrt_maxwellian(g.nodes)
    F, G = rng.normal(size=g.size) * sm, rng.normal(size=g.size) * sm
    assert np.allclose(ge(F, G), ge(G, F), atol=1e-13)
    assert np.allclose(ge(2 * F + G), 4 * ge(F) + 4 * ge(F, G) + ge(G), atol=1e-12)


def test_gamma_at_points_matches_grid_outputs(rng):
    g = build_velocity_grid(5.0, 6)
    on = GammaEvaluator(g, method="product")
    pts = g.nodes[[3, 50, 100]]
    off = GammaEvaluator(g, method="product", points=pts)
    F = rng.normal(size=g.size) * sqrt_maxwellian(g.nodes)
    assert np.allclose(off(F, f_out=F[[3, 50, 100]]), on(F)[[3, 50, 100]], atol=1e-13)
    with pytest.raises(ValueError):
        off(F)


def test_interpolation_exact_on_sqrt_maxwellian_times_trilinear(rng):
    g = build_velocity_grid(4.0, 8)
    c = rng.normal(size=4)
    field = lambda v: (c[0] + c[1] * v[:, 0] + c[2] * v[:, 1] * v[:, 2] + c[3] * v[:, 0] * v[:, 1] * v[:, 2]) \
        * sqrt_maxwellian(v)  # noqa: E731
    pts = rng.uniform(-3.4, 3.4, size=(40, 3))
    assert np.allclose(interpolate_field(g, field(g.nodes), pts)[0], field(pts), atol=1e-12)
