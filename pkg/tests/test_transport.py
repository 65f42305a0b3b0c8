import numpy as np
import pytest

from artifact.grids import build_spatial_grid
from artifact.transport import (BoundaryFamily, PenalizedProblem, SolverError, compute_h, gaussian_bumps,
                                h_by_quadrature, linear_residual, reconstruct_f, solve_linear_penalized,
                                transport_sweep)


def test_sweep_matches_characteristics():
    x = np.linspace(0.0, 3.0, 31)
    b = np.array([0.5, -0.7, 0.0])
    nb = np.array([2.0, 3.0, 4.0])
    Q = np.tile([1.0, 2.0, 8.0], (len(x), 1))
    g = transport_sweep(Q, np.array([5.0, 0, 0]), nb, b, x, g_far=np.array([0, 1.0, 0]))
    lam_in, lam_out = nb[0] / b[0], nb[1] / b[1]
    assert np.allclose(g[:, 0], 0.5 + 4.5 * np.exp(-lam_in * x), rtol=1e-12)
    assert np.allclose(g[:, 1], 2 / 3 + (1 - 2 / 3) * np.exp(-lam_out * (x - 3.0)), rtol=1e-12)
    assert np.allclose(g[:, 2], 2.0)


def test_sweep_rejects_nonpositive_damping():
    with pytest.raises(SolverError):
        transport_sweep(np.zeros((3, 1)), 0.0, np.array([0.0]), np.array([1.0]), np.arange(3.0))


@pytest.fixture(scope="module")
def short_prob(model8):
    """Same operators on a short slab so source iteration stays cheap."""
    m = model8
    a, b = m.cfg.alpha_beta
    return PenalizedProblem(m.rs, m.sol, build_spatial_grid(40.0, 80, 1.15, 1e-3), m.cfg.gamma, a, b)


def test_source_iteration_approaches_modal_under_refinement(short_prob, model8):
    # the sweep-based fixed point carries a discretization error amplified by the slow O(gamma) modes;
    # the modal solve is exact for Q = 0, so the gap must shrink as cells are bisected
    g_b = 1e-3 * model8.base_profile()
    gaps = []
    for space in (short_prob.space, short_prob.space.refined()):
        prob = PenalizedProblem(short_prob.rs, short_prob.sol, space, short_prob.gamma, short_prob.alpha,
                                short_prob.beta)
        gm = prob.solve_modal(None, g_b)
        gk, _ = prob.solve_source_iteration(None, g_b, krylov=True, tol=1e-12, max_iter=400)
        gaps.append(np.max(np.abs(gk - gm)) / np.max(np.abs(gm)))
    assert gaps[1] < 0.7 * gaps[0]
    assert gaps[1] < 0.1


def test_modal_boundary_conditions(short_prob, model8):
    g_b = 1e-3 * model8.base_profile()
    g = short_prob.solve_modal(None, g_b)
    inn = short_prob.b > 0
    assert np.allclose(g[0, inn], g_b[inn], atol=1e-15)
    assert np.allclose(g[-1, ~inn], 0.0, atol=1e-15)


def test_linear_residual_is_second_order(short_prob, model8):
    g_b = 1e-3 * model8.base_profile()
    res = []
    for prob in (short_prob, PenalizedProblem(short_prob.rs, short_prob.sol, short_prob.space.refined(),
                                              short_prob.gamma, short_prob.alpha, short_prob.beta)):
        g = prob.solve_modal(None, g_b)
        r = linear_residual(prob, g, None)
        sel = (prob.x[1:-1] >= 1.0) & (prob.x[1:-1] <= 20.0)
        res.append(np.max(np.abs(r[sel])))
    assert res[1] < res[0] / 3


def test_modal_split_matches_inflow(model8):
    info = model8.prob.modal()["info"]
    assert info["n_forward"] == info["n_inflow"]


def test_h_matches_direct_quadrature():
    x = np.concatenate([[0.0], np.cumsum(np.full(4000, 0.01))])
    G = np.exp(-x) * np.cos(x)
    h = compute_h(G, -0.3, 1e-3, x)
    q = h_by_quadrature(G, -0.3, 1e-3, x)
    assert np.max(np.abs(h - q)) < 1e-4 * np.max(np.abs(q))
    assert h[-1] == 0.0


def test_h_diverging_integral_rejected():
    with pytest.raises(SolverError):
        compute_h(np.ones(3), 0.01, 1e-3, np.arange(3.0))


def test_boundary_family_is_affine(model8):
    fam = model8.family(1e-3)
    a, c = np.array([0.2, -0.1]), np.array([1.0, 3.0])
    assert np.allclose(fam.profile(a + c) - fam.profile(a), 1e-3 * c @ fam.bumps)
    bumps = gaussian_bumps(model8.rs.xi, [0.5, 1.5], 0.5)
    assert bumps.shape == (2, model8.rs.m)
    fam2 = BoundaryFamily(fam.base, fam.bumps, 2e-3)
    assert np.allclose(fam2.profile(a), 2 * fam.profile(a))


def test_picard_converges_and_reconstructs(model8):
    fam = model8.family(1e-3)
    bnd = model8.solver.solve(fam.profile(np.zeros(2)))
    assert bnd.converged
    ups = [h["update"] for h in bnd.history]
    assert ups[-1] < ups[0]
    f = reconstruct_f(bnd, model8.sol, model8.prob.gamma)
    assert np.allclose(f[0], bnd.g[0] - bnd.h[0] * model8.sol.phi)
    assert np.allclose(f, np.exp(-model8.prob.gamma * bnd.x)[:, None] * (bnd.g - np.outer(bnd.h, model8.sol.phi)))


def test_zero_data_gives_zero_solution(model8):
    bnd = model8.solver.solve(np.zeros(model8.rs.m))
    assert bnd.converged and not np.any(bnd.g) and not np.any(bnd.h)
