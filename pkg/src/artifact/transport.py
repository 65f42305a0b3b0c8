"""Characteristic transport sweeps, the penalized linear and nonlinear solvers,
boundary tuning and reconstruction of f = e^{-gamma x} (g - h phi_u).

Fields are arrays of shape (J+1, m): space nodes by reduced velocity nodes.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
import scipy.linalg as sla
import scipy.sparse.linalg as spla

from . import kernels
from .collision import GammaEvaluator
from .grids import SpatialGrid, w_weight
from .spectral import (AdmissibilityData, EigenSolution, ReducedSystem, admissibility_residual,
                       penalty_moments)

log = logging.getLogger(__name__)

GRAZING = 1e-12


class SolverError(RuntimeError):
    def __init__(self, msg: str, history: list | None = None):
        super().__init__(msg)
        self.history = history or []


# --------------------------------------------------------------------- sweeps


def transport_sweep(Q: np.ndarray, g_b: np.ndarray, nubar: np.ndarray, b: np.ndarray, x: np.ndarray,
                    g_far: np.ndarray | float = 0.0, kappa: float = 0.0) -> np.ndarray:
    """Solve b g' + nubar g = Q along each velocity's characteristic.

    Inflow (b > 0) starts from ``g_b`` at x = 0, outflow (b < 0) from
    ``g_far`` at x = L, and grazing velocities take g = Q / nubar. The
    per-cell integration is exact when Q is e^{-kappa x} times a piecewise
    linear function of x.
    """
    Q = np.atleast_2d(np.asarray(Q, float))
    nubar = np.asarray(nubar, float)
    b = np.asarray(b, float)
    if np.any(nubar <= 0):
        raise SolverError("damping nubar <= 0 somewhere; gamma is too large for this grid")
    K = len(b)
    g_b = np.broadcast_to(np.asarray(g_b, float), (K,))
    g_far = np.broadcast_to(np.asarray(g_far, float), (K,))
    out = np.empty((len(x), K))
    inn = b > GRAZING
    outf = b < -GRAZING
    graz = ~(inn | outf)
    if np.any(inn):
        lam = nubar[inn] / b[inn]
        out[:, inn] = kernels.exp_sweep(lam, x, Q[:, inn] / b[inn], g_b[inn], kappa, True)
    if np.any(outf):
        lam = nubar[outf] / b[outf]
        out[:, outf] = kernels.exp_sweep(lam, x, Q[:, outf] / b[outf], g_far[outf], kappa, False)
    if np.any(graz):
        out[:, graz] = Q[:, graz] / nubar[graz]
    return out


# ----------------------------------------------------------- penalized linear


@dataclass
class PenalizedProblem:
    """b g' + L^p g = S on [0, L] with g = g_b on inflow at 0 and g = 0 on outflow at L.

    L^p g = L g + alpha Pi+((xi1+u) g) + beta p_u g - gamma (xi1+u) g.
    """

    rs: ReducedSystem
    sol: EigenSolution
    space: SpatialGrid
    gamma: float
    alpha: float
    beta: float
    _modal: dict | None = field(default=None, repr=False)

    @property
    def b(self) -> np.ndarray:
        return self.rs.flux(self.sol.u)

    @property
    def x(self) -> np.ndarray:
        return self.space.nodes

    @property
    def nubar(self) -> np.ndarray:
        return self.rs.nu - self.gamma * self.b

    def Lp_matrix(self) -> np.ndarray:
        rs, sol, b = self.rs, self.sol, self.b
        A = rs.L.copy()
        A += self.alpha * np.outer(rs.Xp, rs.Xp * rs.q * b)
        A -= self.beta * np.outer(sol.phi, sol.psi * rs.q * b)
        A[np.diag_indices_from(A)] -= self.gamma * b
        return A

    def apply_Lp(self, g: np.ndarray) -> np.ndarray:
        return np.asarray(g) @ self.Lp_matrix().T

    def apply_Kp(self, g: np.ndarray) -> np.ndarray:
        """K^p g = nubar g - L^p g."""
        g = np.asarray(g, float)
        return self.nubar * g - g @ self.Lp_matrix().T

    # ---- modal solver
    def modal(self) -> dict:
        if self._modal is None:
            b = self.b
            if np.any(np.abs(b) < GRAZING):
                raise SolverError("grid node on the grazing set; the modal solver needs b != 0")
            C = self.Lp_matrix() / b[:, None]
            lam, V = np.linalg.eig(C)
            lu = sla.lu_factor(V)
            fwd = np.real(lam) > 0
            x = self.x
            Lx = x[-1]
            inn = b > 0
            with np.errstate(over="ignore"):
                D0 = np.where(fwd, 1.0, np.exp(np.where(fwd, 0.0, lam) * Lx))
                DL = np.where(fwd, np.exp(-np.where(fwd, lam, 0.0) * Lx), 1.0)
            M = np.vstack([V[inn] * D0[None, :], V[~inn] * DL[None, :]])
            bc_lu = sla.lu_factor(M)
            n_in = int(inn.sum())
            info = {"n_forward": int(fwd.sum()), "n_inflow": n_in,
                    "cond_V": float(np.linalg.cond(V)), "cond_bc": float(np.linalg.cond(M))}
            if info["n_forward"] != n_in:
                log.warning("modal split %d forward modes vs %d inflow nodes", info["n_forward"], n_in)
            self._modal = dict(lam=lam, V=V, lu=lu, fwd=fwd, inn=inn, bc_lu=bc_lu, info=info)
        return self._modal

    def solve_modal(self, S: np.ndarray | None, g_b: np.ndarray, kappa: float = 0.0) -> np.ndarray:
        """Exact solve for S = e^{-kappa x} times a piecewise-linear function of x."""
        md = self.modal()
        lam, V, fwd, inn = md["lam"], md["V"], md["fwd"], md["inn"]
        x = self.x
        J1, m = len(x), len(lam)
        P = np.zeros((J1, m), dtype=complex)
        if S is not None and np.any(S):
            sig = sla.lu_solve(md["lu"], (np.asarray(S, float) / self.b).T).T.astype(complex)
            if np.any(fwd):
                P[:, fwd] = kernels.exp_sweep(lam[fwd], x, np.ascontiguousarray(sig[:, fwd]),
                                              np.zeros(int(fwd.sum()), complex), kappa, True)
            if np.any(~fwd):
                P[:, ~fwd] = kernels.exp_sweep(lam[~fwd], x, np.ascontiguousarray(sig[:, ~fwd]),
                                               np.zeros(int((~fwd).sum()), complex), kappa, False)
        g_b = np.asarray(g_b, float)
        rhs = np.concatenate([g_b[inn] - V[inn] @ P[0], -(V[~inn] @ P[-1])])
        a = sla.lu_solve(md["bc_lu"], rhs)
        Lx = x[-1]
        lf = np.where(fwd, lam, 0.0)
        lb = np.where(fwd, 0.0, lam)
        D = np.where(fwd[None, :], np.exp(-np.outer(x, lf)), np.exp(np.outer(Lx - x, lb)))
        Cx = a[None, :] * D + P
        return np.real(Cx @ V.T)

    # ---- source iteration
    def solve_source_iteration(self, S: np.ndarray | None, g_b: np.ndarray, kappa: float = 0.0,
                               tol: float = 1e-10, max_iter: int = 5000, theta: float = 0.1,
                               krylov: bool = False, continuation: bool = True) -> tuple[np.ndarray, list]:
        """g <- sweep(K^p g + S, g_b, nubar), with lambda-continuation on failure.

        ``krylov=True`` solves the same fixed point with GMRES, the sweep
        acting as the preconditioner.
        """
        x, b, nb = self.x, self.b, self.nubar
        m = len(b)
        S0 = np.zeros((len(x), m)) if S is None else np.asarray(S, float)
        w = w_weight(self.rs.xi, theta)
        Kp = self.Lp_matrix()
        Kp = np.diag(nb) - Kp

        def sweep(src, gb):
            return transport_sweep(src, gb, nb, b, x)

        if krylov:
            base = sweep(S0, g_b)
            shape = base.shape

            def mv(v):
                G = v.reshape(shape)
                return (G - sweep(G @ Kp.T, 0.0)).ravel()

            A = spla.LinearOperator((base.size, base.size), matvec=mv, dtype=float)
            hist: list = []
            sol, info = spla.gmres(A, base.ravel(), rtol=tol, atol=0.0, restart=80, maxiter=max_iter,
                                   callback=lambda r: hist.append(float(r)), callback_type="pr_norm")
            if info != 0:
                raise SolverError(f"GMRES did not converge (info={info})", hist)
            return sol.reshape(shape), hist

        def run(lam_k, g0, iters):
            g = g0
            hist = []
            for it in range(iters):
                gn = sweep(lam_k * (g @ Kp.T) + S0, g_b)
                d = float(np.max(np.abs(w * (gn - g))))
                hist.append(d)
                g = gn
                if d < tol:
                    return g, hist, True
                if it > 5 and not np.isfinite(d):
                    break
            return g, hist, False

        g0 = np.zeros((len(x), m))
        g, hist, ok = run(1.0, g0, max_iter)
        if ok:
            return g, hist
        if not continuation:
            raise SolverError("source iteration did not converge", hist)
        log.info("source iteration failed; restarting with lambda-continuation")
        g = g0
        full = []
        for lam_k in np.linspace(0.25, 1.0, 4):
            g, h2, ok = run(lam_k, g, max_iter)
            full.extend(h2)
        if not ok:
            raise SolverError("source iteration with lambda-continuation did not converge", full)
        return g, full


def solve_linear_penalized(prob: PenalizedProblem, Q: np.ndarray | None, g_b: np.ndarray, method: str = "modal",
                           kappa: float = 0.0, **kw) -> np.ndarray:
    if method == "modal":
        return prob.solve_modal(Q, g_b, kappa)
    if method == "source":
        g, _ = prob.solve_source_iteration(Q, g_b, kappa, **kw)
        return g
    raise ValueError(f"unknown linear method {method!r}")


def linear_residual(prob: PenalizedProblem, g: np.ndarray, Q: np.ndarray | None) -> np.ndarray:
    """b dg/dx + L^p g - Q at interior nodes, dg/dx by second-order differences."""
    dg = fd_derivative(g, prob.x)
    r = prob.b * dg + g @ prob.Lp_matrix().T
    if Q is not None:
        r = r - Q
    return r[1:-1]


def fd_derivative(f: np.ndarray, x: np.ndarray) -> np.ndarray:
    """Second-order differences on a nonuniform grid (one-sided at the ends)."""
    return np.gradient(np.asarray(f, float), x, axis=0, edge_order=2)


# ------------------------------------------------------------------------- h


def compute_h(psi_gamma: np.ndarray, tau: float, gamma: float, x: np.ndarray) -> np.ndarray:
    """h(x) = -e^{-gamma x} int_0^inf e^{(tau - 2 gamma) z} <psi Gamma>(x + z) dz.

    Solved as the backward ODE h' = (gamma - tau) h + e^{-gamma x} <psi Gamma>
    with h(L) = 0, exact for piecewise-linear <psi Gamma>; the source is
    taken as zero beyond L.
    """
    if tau - 2 * gamma >= 0:
        raise SolverError(f"tau - 2 gamma = {tau - 2 * gamma:.3e} >= 0: the z-integral diverges")
    G = np.asarray(psi_gamma, float)
    s = (np.exp(-gamma * x) * G)[:, None]
    return kernels.exp_sweep(np.array([tau - gamma]), x, s, np.zeros(1), gamma, False)[:, 0]


def h_by_quadrature(psi_gamma: np.ndarray, tau: float, gamma: float, x: np.ndarray) -> np.ndarray:
    """Direct trapezoid quadrature of the defining integral (oracle for compute_h)."""
    G = np.asarray(psi_gamma, float)
    out = np.zeros(len(x))
    for j in range(len(x)):
        z = x[j:] - x[j]
        out[j] = -np.exp(-gamma * x[j]) * np.trapezoid(np.exp((tau - 2 * gamma) * z) * G[j:], z) if len(z) > 1 else 0.0
    return out


# ------------------------------------------------------------------ nonlinear


@dataclass
class SolutionBundle:
    x: np.ndarray
    g: np.ndarray
    h: np.ndarray
    f_b: np.ndarray
    history: list
    moments: np.ndarray
    converged: bool
    meta: dict = field(default_factory=dict)


@dataclass
class NonlinearSolver:
    prob: PenalizedProblem
    gamma_eval: GammaEvaluator
    method: str = "modal"
    tol: float = 1e-13
    max_iter: int = 60
    theta: float = 0.1

    @property
    def rs(self) -> ReducedSystem:
        return self.prob.rs

    def collision_source(self, g: np.ndarray, h: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """(I - P) Gamma(f~, f~) at every x for f~ = g - h phi_u, plus <psi Gamma>."""
        rs, sol = self.rs, self.prob.sol
        ft = g - np.outer(h, sol.phi)
        Gm = self.gamma_eval(rs.expand(ft))
        Gm = rs.project_invariants(Gm)
        return Gm, rs.inner(Gm, sol.psi)

    def source_from(self, Gm: np.ndarray) -> np.ndarray:
        """(I - P_u) Gamma, without the e^{-gamma x} factor."""
        rs, sol = self.rs, self.prob.sol
        b = self.prob.b
        return Gm + np.outer(rs.inner(Gm, sol.psi), b * sol.phi)

    def solve(self, f_b: np.ndarray, g0: np.ndarray | None = None, h0: np.ndarray | None = None) -> SolutionBundle:
        prob, rs, sol = self.prob, self.rs, self.prob.sol
        x = prob.x
        gam = prob.gamma
        J1, m = len(x), rs.m
        w = w_weight(rs.xi, self.theta)
        g = np.zeros((J1, m)) if g0 is None else g0
        h = np.zeros(J1) if h0 is None else h0
        history = []
        first = None
        converged = False
        if not np.any(f_b) and g0 is None:
            return SolutionBundle(x, g, h, f_b, [{"iter": 0, "update": 0.0, "norm": 0.0}],
                                  penalty_moments(rs, sol, g), True)
        for it in range(1, self.max_iter + 1):
            Gm, psiG = self.collision_source(g, h)
            h_new = compute_h(psiG, sol.tau, gam, x)
            S = np.exp(-gam * x)[:, None] * self.source_from(Gm)
            g_b = f_b + h_new[0] * sol.phi
            g_new = solve_linear_penalized(prob, S, g_b, self.method, kappa=gam)
            upd = float(np.max(np.abs(w * (g_new - g))) + np.max(np.abs(h_new - h)))
            nrm = float(np.max(np.abs(w * g_new)) + np.max(np.abs(h_new)))
            history.append({"iter": it, "update": upd, "norm": nrm})
            if first is None:
                first = nrm
            elif nrm > 10 * first:
                raise SolverError(f"Picard iterate norm {nrm:.3e} exceeds 10x the first ({first:.3e}); shrink eps",
                                  history)
            g, h = g_new, h_new
            if upd <= self.tol * max(nrm, 1e-300):
                converged = True
                break
        if not converged:
            raise SolverError(f"Picard loop did not reach tol {self.tol} in {self.max_iter} iterations", history)
        return SolutionBundle(x, g, h, f_b, history, penalty_moments(rs, sol, g), converged)


def solve_nonlinear_penalized(solver: NonlinearSolver, f_b: np.ndarray, **kw) -> SolutionBundle:
    return solver.solve(f_b, **kw)


# ------------------------------------------------------------------- tuning


@dataclass
class BoundaryFamily:
    """f_b = eps (scale * base + a1 bump1 + a2 bump2) on the reduced nodes."""

    base: np.ndarray
    bumps: np.ndarray
    eps: float
    scale: float = 1.0

    def profile(self, a: np.ndarray) -> np.ndarray:
        a = np.asarray(a, float)
        return self.eps * (self.scale * self.base + a @ self.bumps)

    def weighted_sup(self, a: np.ndarray, w: np.ndarray) -> float:
        return float(np.max(np.abs(w * self.profile(a))))


def gaussian_bumps(xi: np.ndarray, centers: list[float], width: float) -> np.ndarray:
    """R-symmetric (indeed axially symmetric) Gaussian bumps in xi1 on the inflow side."""
    tr = np.exp(-(xi[:, 1] ** 2 + xi[:, 2] ** 2) / 2.0)
    return np.stack([np.exp(-((xi[:, 0] - c) ** 2) / (2 * width**2)) * tr for c in centers])


@dataclass
class TuneResult:
    a: np.ndarray
    bundle: SolutionBundle
    residual: np.ndarray
    history: list
    jacobian: np.ndarray
    converged: bool


def tune_boundary(solver: NonlinearSolver, family: BoundaryFamily, adm: AdmissibilityData, tol: float = 1e-12,
                  max_iter: int = 8, a0: np.ndarray | None = None, fd_step: float = 0.1) -> TuneResult:
    """Newton on (a1, a2) driving r_i = <(xi1+u) Y_i g(0)> to zero.

    The Jacobian comes from finite differences of the full nonlinear map and
    is reused (chord iteration); the map is affine up to O(eps^2).
    """
    rs, u = solver.rs, solver.prob.sol.u
    a = np.zeros(2) if a0 is None else np.asarray(a0, float)
    hist = []

    def resid(av, warm=None):
        bnd = solver.solve(family.profile(av), *(warm or (None, None)))
        return admissibility_residual(rs, bnd.g[0], adm, u), bnd

    r, bnd = resid(a)
    hist.append({"a": a.tolist(), "r": r.tolist()})
    scale = max(np.max(np.abs(r)), 1e-300)
    Jm = np.empty((2, 2))
    for k in range(2):
        da = np.zeros(2)
        da[k] = fd_step
        rk, _ = resid(a + da, (bnd.g, bnd.h))
        Jm[:, k] = (rk - r) / fd_step
    cond = float(np.linalg.cond(Jm))
    if not np.isfinite(cond) or cond > 1e12:
        raise SolverError(f"tuning Jacobian is near-singular (cond = {cond:.3e}); bumps do not control (Y1, Y2)")
    converged = bool(np.max(np.abs(r)) < tol)
    for _ in range(max_iter):
        if converged:
            break
        a = a - np.linalg.solve(Jm, r)
        r, bnd = resid(a, (bnd.g, bnd.h))
        hist.append({"a": a.tolist(), "r": r.tolist()})
        converged = bool(np.max(np.abs(r)) < tol)
    if not converged:
        log.warning("tuning stopped at |r| = %.3e (tol %.1e), start %.3e", np.max(np.abs(r)), tol, scale)
    return TuneResult(a, bnd, r, hist, Jm, converged)


# ------------------------------------------------------------- reconstruction


def reconstruct_f(bundle: SolutionBundle, sol: EigenSolution, gamma: float) -> np.ndarray:
    return np.exp(-gamma * bundle.x)[:, None] * (bundle.g - np.outer(bundle.h, sol.phi))


def residual_check(f: np.ndarray, x: np.ndarray, rs: ReducedSystem, u: float, gamma_eval: GammaEvaluator,
                   theta: float = 0.1, interior: slice | None = None) -> dict:
    """Residual of (xi1+u) f' + L f - (I - P) Gamma(f, f) with second-order differences.

    Reported over interior nodes as weighted sup and weighted L2 (trapezoid
    in x, orbit weights in velocity).
    """
    b = rs.flux(u)
    df = fd_derivative(f, x)
    Gm = rs.project_invariants(gamma_eval(rs.expand(f)))
    r = b * df + f @ rs.L.T - Gm
    sl = interior or slice(1, -1)
    r = r[sl]
    xs = x[sl]
    w = w_weight(rs.xi, theta)
    l2x = (w * r) ** 2 @ rs.q
    l2 = float(np.sqrt(np.trapezoid(l2x, xs)))
    scale = float(np.max(np.abs(w * b * df)[sl]))
    return {"sup": float(np.max(np.abs(w * r))), "l2": l2, "scale": scale}
