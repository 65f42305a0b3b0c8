import numpy as np
import pytest

from artifact.collision import assemble_collision
from artifact.grids import build_velocity_grid
from artifact.spectral import (SQRT_5_3, K_penalized, P_u, SpectralError, build_admissibility, build_basis,
                               build_reduced_system, p_u, penalty_moments, solve_eigenpair)


@pytest.fixture(scope="module")
def rs8(model8):
    return model8.rs


def test_basis_flux_values_at_sixteen_nodes():
    b = build_basis(build_velocity_grid(6.0, 16))
    F = b.flux()
    assert F[0, 0] == pytest.approx(np.sqrt(5 / 3), abs=1e-2)
    assert F[2, 2] == pytest.approx(-np.sqrt(5 / 3), abs=1e-2)
    assert abs(F[1, 1]) < 1e-3
    assert np.max(np.abs(b.gram() - np.eye(5))) < 1e-3
    assert b.check() == []
    assert SQRT_5_3 == pytest.approx(1.290994, abs=1e-6)


def test_basis_tolerances_shrink_with_refinement():
    errs = [abs(build_basis(build_velocity_grid(6.0, n)).flux()[0, 0] - SQRT_5_3) for n in (8, 12, 16)]
    assert errs[0] > errs[1] > errs[2]


def test_reduced_operator_is_conservative_and_symmetric(rs8):
    Lq = rs8.L * rs8.q[None, :]
    # self-adjoint in the orbit inner product: q_i L_ij = q_j L_ji
    S = rs8.q[:, None] * rs8.L
    assert np.allclose(S, S.T, atol=1e-12 * np.max(np.abs(S)))
    for v in (rs8.Xp, rs8.X0, rs8.Xm):
        assert np.max(np.abs(rs8.L @ v)) < 1e-10 * np.max(np.abs(Lq))


def test_discrete_flux_diagonal_basis(rs8):
    ev = rs8.meta["flux_eigenvalues"]
    assert ev[0] > 0 > ev[2] and abs(ev[1]) < 1e-2
    assert rs8.inner(rs8.Xp, rs8.X0) == pytest.approx(0.0, abs=1e-12)
    assert rs8.inner(rs8.xi[:, 0] * rs8.Xp, rs8.X0) == pytest.approx(0.0, abs=1e-12)


def test_eigenpair_equation_and_normalization(model8):
    rs, sol = model8.rs, model8.sol
    b = rs.flux(sol.u)
    r = rs.L @ sol.phi - sol.tau * b * sol.phi
    assert np.sqrt(rs.inner(r, r)) < 1e-8 * np.sqrt(rs.inner(sol.phi, sol.phi))
    assert rs.inner(b * sol.phi, sol.phi) == pytest.approx(-sol.u, abs=1e-10)
    assert sol.norm_residual < 1e-10
    # <phi L phi> = tau <(xi1+u) phi^2> = -tau u and L >= 0, so tau u < 0
    assert sol.tau * sol.u < 0
    assert rs.inner(sol.phi, rs.L @ sol.phi) == pytest.approx(-sol.tau * sol.u, rel=1e-8)


def test_psi_is_finite_difference_of_branch(model8):
    sol = model8.sol
    assert np.allclose(sol.psi, (sol.phi - sol.phi0) / sol.u)
    assert np.all(np.isfinite(sol.psi))


def test_penalty_projections(model8):
    rs, sol = model8.rs, model8.sol
    b = rs.flux(sol.u)
    g = np.random.default_rng(0).normal(size=rs.m)
    # p_u lands on phi, P_u on (xi1+u) phi
    c = p_u(rs, sol, g) / sol.phi
    assert np.allclose(c, c[0])
    C = P_u(rs, sol, g) / (b * sol.phi)
    assert np.allclose(C, C[0])
    gamma = model8.cfg.gamma
    Kp = K_penalized(rs, sol, g, gamma)
    assert Kp.shape == g.shape
    assert np.allclose(model8.prob.apply_Kp(g[None, :])[0] - gamma * b * g * 0, model8.prob.nubar * g
                       - model8.prob.apply_Lp(g[None, :])[0])


def test_admissibility_has_two_decaying_modes(model8):
    adm = model8.adm
    gamma = model8.cfg.gamma
    assert np.sum(adm.mu > gamma) == 2
    assert adm.residual < 1e-12
    assert adm.margin > 0
    assert np.all(np.isfinite(adm.Y1)) and np.all(np.isfinite(adm.Y2))


def test_penalty_moments_shape(model8):
    g = np.zeros((4, model8.rs.m))
    assert penalty_moments(model8.rs, model8.sol, g).shape == (4, 2)


def test_zero_drift_rejected(rs8):
    with pytest.raises(SpectralError):
        solve_eigenpair(rs8, 0.0)


def test_admissibility_needs_psi(model8):
    sol = model8.sol
    bare = type(sol)(u=sol.u, tau=sol.tau, phi=sol.phi)
    with pytest.raises(SpectralError):
        build_admissibility(model8.rs, bare, 2e-3, 2e-3, 1e-3)


def test_grazing_node_rejected():
    op = assemble_collision(build_velocity_grid(6.0, 8), "physical")
    rs = build_reduced_system(op)
    with pytest.raises(SpectralError, match="grazing"):
        solve_eigenpair(rs, -float(rs.xi[0, 0]))
