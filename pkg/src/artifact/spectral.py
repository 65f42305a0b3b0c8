"""Collision-invariant basis, the slow eigenpair (tau_u, phi_u), psi_u and the
admissibility data (matrix A, left eigenvectors, Y1, Y2).

Solver-side quantities live in the symmetry-reduced space of a
:class:`ReducedSystem`: a field is stored by its values at one node per
orbit, and inner products use orbit weights.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla
import scipy.sparse.linalg as spla

from .collision import CollisionOperator
from .grids import Symmetry, VelocityGrid, sqrt_maxwellian, w_weight

log = logging.getLogger(__name__)

SQRT_5_3 = np.sqrt(5.0 / 3.0)


class SpectralError(RuntimeError):
    pass


@dataclass
class InvariantBasis:
    """Closed-form basis X+, X0, X-, xi2 sqrt(M), xi3 sqrt(M) sampled on a grid."""

    grid: VelocityGrid
    fields: dict[str, np.ndarray]

    NAMES = ("X+", "X0", "X-", "xi2", "xi3")

    def gram(self) -> np.ndarray:
        F = np.stack([self.fields[k] for k in self.NAMES])
        return (F * self.grid.weights) @ F.T

    def flux(self) -> np.ndarray:
        F = np.stack([self.fields[k] for k in self.NAMES])
        return (F * (self.grid.weights * self.grid.nodes[:, 0])) @ F.T

    def check(self, tol_orth: float = 1e-3, tol_flux: float = 1e-2) -> list[str]:
        """Return a list of violated identities (empty when all hold)."""
        bad = []
        G = self.gram()
        for a in range(5):
            for b in range(5):
                target = 1.0 if a == b else 0.0
                if abs(G[a, b] - target) > tol_orth:
                    bad.append(f"<{self.NAMES[a]} {self.NAMES[b]}> = {G[a, b]:.3e}, expected {target}")
        Fx = self.flux()
        for name, target in (("X+", SQRT_5_3), ("X-", -SQRT_5_3), ("X0", 0.0), ("xi2", 0.0), ("xi3", 0.0)):
            a = self.NAMES.index(name)
            if abs(Fx[a, a] - target) > tol_flux:
                bad.append(f"<xi1 {name}^2> = {Fx[a, a]:.6f}, expected {target:.6f}")
        return bad


def build_basis(grid: VelocityGrid) -> InvariantBasis:
    v = grid.nodes
    sm = sqrt_maxwellian(v)
    s2 = np.sum(v**2, axis=1)
    fields = {
        "X+": (s2 + np.sqrt(15.0) * v[:, 0]) * sm / np.sqrt(30.0),
        "X-": (s2 - np.sqrt(15.0) * v[:, 0]) * sm / np.sqrt(30.0),
        "X0": (s2 - 5.0) * sm / np.sqrt(10.0),
        "xi2": v[:, 1] * sm,
        "xi3": v[:, 2] * sm,
    }
    return InvariantBasis(grid, fields)


@dataclass
class ReducedSystem:
    """Everything the spectral and transport solvers share.

    ``L`` is the conservative reduced operator (I - P) L (I - P), where P is
    the weighted orthogonal projection onto the discrete invariants, so the
    invariants are exact null vectors and L is self-adjoint in the orbit
    inner product. ``Xp``, ``X0``, ``Xm`` are the discrete invariants that
    diagonalize the flux form <xi1 . .>.
    """

    grid: VelocityGrid
    op: CollisionOperator
    sym: Symmetry
    L: np.ndarray
    nu: np.ndarray
    xi: np.ndarray
    q: np.ndarray
    U: np.ndarray
    Xp: np.ndarray
    X0: np.ndarray
    Xm: np.ndarray
    conservative: bool = True
    meta: dict = field(default_factory=dict)

    @property
    def m(self) -> int:
        return len(self.q)

    def inner(self, f: np.ndarray, g: np.ndarray) -> np.ndarray:
        return (np.asarray(f) * np.asarray(g)) @ self.q

    def expand(self, c: np.ndarray) -> np.ndarray:
        return self.sym.expand(c)

    def restrict(self, f: np.ndarray) -> np.ndarray:
        return self.sym.restrict(f)

    def project_invariants(self, f: np.ndarray) -> np.ndarray:
        """(I - P) f, removing the discrete collision-invariant component."""
        f = np.asarray(f, float)
        return f - (f * self.q) @ self.U.T @ self.U

    def flux(self, u: float) -> np.ndarray:
        return self.xi[:, 0] + u


def _orthonormalize(F: np.ndarray, q: np.ndarray) -> np.ndarray:
    G = (F * q) @ F.T
    Lc = np.linalg.cholesky(G)
    return np.linalg.solve(Lc, F)


def build_reduced_system(op: CollisionOperator, symmetry: str = "axial", conservative: bool = True) -> ReducedSystem:
    grid = op.grid
    sym = Symmetry(grid, symmetry)
    reps = sym.reps
    Lfull_rows = -op.kmat[reps] * grid.weights[None, :]
    Lfull_rows[np.arange(sym.m), reps] += op.nu[reps]
    L = np.asarray(sym.reduce_rows(Lfull_rows))
    q = sym.weights
    xi = grid.nodes[reps]
    sm = sqrt_maxwellian(xi)
    s2 = np.sum(xi**2, axis=1)
    inv = [sm, xi[:, 0] * sm, s2 * sm]
    if symmetry == "none":
        inv += [xi[:, 1] * sm, xi[:, 2] * sm]
    elif symmetry == "R":
        pass  # xi2 sqrt(M), xi3 sqrt(M) are odd under R
    U = _orthonormalize(np.stack(inv), q)
    if conservative:
        P = (U.T @ (U * q))
        I = np.eye(len(q))
        L = (I - P) @ L @ (I - P)
    # flux-diagonal basis of span(sqrt M, xi1 sqrt M, |xi|^2 sqrt M)
    U3 = _orthonormalize(np.stack(inv[:3]), q)
    Fx = (U3 * (q * xi[:, 0])) @ U3.T
    ev, vec = np.linalg.eigh(Fx)
    order = np.argsort(ev)[::-1]
    ev, vec = ev[order], vec[:, order]
    Xd = vec.T @ U3
    ref = build_basis(grid).fields
    names = ("X+", "X0", "X-")
    for k, name in enumerate(names):
        if Xd[k] @ (ref[name][reps] * q) < 0:
            Xd[k] = -Xd[k]
    nu = op.nu[reps]
    rs = ReducedSystem(grid, op, sym, L, nu, xi, q, U, Xd[0], Xd[1], Xd[2], conservative)
    rs.meta["flux_eigenvalues"] = ev.tolist()
    return rs


# ---------------------------------------------------------------- eigenpairs


@dataclass
class EigenSolution:
    u: float
    tau: float
    phi: np.ndarray
    psi: np.ndarray | None = None
    phi0: np.ndarray | None = None
    residual: float = 0.0
    norm_residual: float = 0.0
    gap: float = 0.0
    meta: dict = field(default_factory=dict)

    def weighted_sup(self, rs: ReducedSystem, theta: float, which: str = "phi") -> float:
        f = self.phi if which == "phi" else self.psi
        if f is None:
            raise SpectralError(f"{which} not computed")
        return float(np.max(np.abs(w_weight(rs.xi, theta) * f)))


def _pencil_eigs(rs: ReducedSystem, u: float, method: str = "auto", k: int = 12, sigma: float | None = None):
    b = rs.flux(u)
    if np.any(np.abs(b) < 1e-12):
        raise SpectralError(f"grid node on the grazing set for u = {u}")
    if method == "auto":
        method = "dense" if rs.m <= 2500 else "shift-invert"
    if method == "dense":
        C = rs.L / b[:, None]
        tau, V = np.linalg.eig(C)
        return tau, V
    if sigma is None:
        sigma = -abs(u)
    # shift-invert on the pencil: (L - sigma B)^{-1} B x = 1/(tau - sigma) x
    lu = sla.lu_factor(rs.L - sigma * np.diag(b))
    opr = spla.LinearOperator((rs.m, rs.m), matvec=lambda x: sla.lu_solve(lu, b * x), dtype=float)
    theta, V = spla.eigs(opr, k=min(k, rs.m - 2), which="LM", tol=1e-13)
    return sigma + 1.0 / theta, V


def _refine(rs: ReducedSystem, u: float, tau: float, phi: np.ndarray, steps: int = 3):
    """Rayleigh-quotient refinement of a real pencil eigenpair."""
    b = rs.flux(u)
    for _ in range(steps):
        try:
            y = np.linalg.solve(rs.L - tau * np.diag(b), b * phi)
        except np.linalg.LinAlgError:
            break
        phi = y / np.sqrt(rs.inner(y, y))
        tau = rs.inner(phi, rs.L @ phi) / rs.inner(phi, b * phi)
    return tau, phi


def _null_mask(rs: ReducedSystem, V: np.ndarray) -> np.ndarray:
    """True for eigenvectors lying (almost) in the invariant span."""
    Vr = np.real(V)
    nrm = np.sqrt(np.sum(Vr**2 * rs.q[:, None], axis=0))
    proj = (rs.U * rs.q) @ Vr
    frac = np.sqrt(np.sum(proj**2, axis=0)) / np.where(nrm > 0, nrm, 1)
    return frac > 1 - 1e-8


def solve_eigenpair(rs: ReducedSystem, u: float, previous: EigenSolution | None = None,
                    method: str = "auto", sign: str = "xplus") -> EigenSolution:
    """Slow eigenpair of L phi = tau (xi1 + u) phi, normalized so <(xi1+u) phi^2> = -u.

    Without ``previous`` the branch is the nonzero eigenvalue of smallest
    modulus (the invariants give exact zeros and are skipped). With
    ``previous`` the eigenvector of largest overlap is taken, which follows
    the branch across small steps in u, including through u = 0.
    """
    if u == 0:
        raise SpectralError("u = 0 is degenerate; use compute_psi for the limit")
    tau_all, V = _pencil_eigs(rs, u, method)
    keep = ~_null_mask(rs, V) & (np.abs(np.imag(tau_all)) < 1e-8 * (1 + np.abs(tau_all)))
    if not np.any(keep):
        raise SpectralError("no real non-invariant eigenvalue found")
    idx = np.nonzero(keep)[0]
    Vr = np.real(V[:, idx])
    Vr = Vr / np.sqrt(np.sum(Vr**2 * rs.q[:, None], axis=0))
    t = np.real(tau_all[idx])
    if previous is None:
        order = np.argsort(np.abs(t))
        pick = order[0]
        if len(order) > 1 and abs(abs(t[order[1]]) - abs(t[pick])) < 1e-10:
            raise SpectralError(
                f"branch ambiguity at u={u}: eigenvalues {t[pick]:.3e} and {t[order[1]]:.3e} within 1e-10"
            )
        gap = abs(t[order[1]]) - abs(t[pick]) if len(order) > 1 else np.inf
    else:
        pv = previous.phi / np.sqrt(rs.inner(previous.phi, previous.phi))
        ov = np.abs((pv * rs.q) @ Vr)
        order = np.argsort(ov)[::-1]
        pick = order[0]
        if ov[pick] < 0.9:
            raise SpectralError(f"continuation lost the branch at u={u}: best overlap {ov[pick]:.3f} < 0.9")
        gap = ov[pick] - (ov[order[1]] if len(order) > 1 else 0.0)
    tau, phi = _refine(rs, u, float(t[pick]), Vr[:, pick])
    b = rs.flux(u)
    s = rs.inner(b * phi, phi)
    if s * (-u) <= 0:
        raise SpectralError(
            f"normalization impossible at u={u}: <(xi1+u) phi^2> = {s:.3e} has the sign of u"
        )
    phi = phi * np.sqrt(-u / s)
    if previous is not None:
        if rs.inner(phi, previous.phi) < 0:
            phi = -phi
    elif sign == "xplus" and rs.inner(phi, rs.Xp) < 0:
        phi = -phi
    res = np.sqrt(rs.inner(*(2 * [rs.L @ phi - tau * b * phi]))) / np.sqrt(rs.inner(phi, phi))
    norm_res = abs(rs.inner(b * phi, phi) + u)
    return EigenSolution(u=float(u), tau=float(tau), phi=phi, residual=float(res),
                         norm_residual=float(norm_res), gap=float(gap))


def continue_branch(rs: ReducedSystem, u: float, u_min: float = 1e-3, steps_per_doubling: int = 2,
                    method: str = "auto") -> EigenSolution:
    """Follow the slow branch from u_min (smallest nonzero |tau|) up to u by overlap."""
    if abs(u) <= u_min:
        return solve_eigenpair(rs, u, method=method)
    n = max(1, int(np.ceil(steps_per_doubling * np.log2(abs(u) / u_min))))
    path = np.sign(u) * u_min * (abs(u) / u_min) ** (np.arange(n + 1) / n)
    sol = solve_eigenpair(rs, path[0], method=method)
    for uu in path[1:]:
        sol = solve_eigenpair(rs, float(uu), previous=sol, method=method)
    if sol.tau != 0 and rs.inner(sol.phi, rs.Xp) < 0 and u > 0:
        sol.phi = -sol.phi
    return sol


def compute_phi0(rs: ReducedSystem, delta_u: float = 1e-3, method: str = "auto") -> tuple[np.ndarray, dict]:
    """phi_0 from the symmetric average of phi at +-delta_u, projected onto the discrete X0.

    The -delta_u eigenvector is matched to the +delta_u one by overlap; an
    overlap below 0.9 is reported as an extrapolation failure.
    """
    plus = solve_eigenpair(rs, delta_u, method=method)
    minus = solve_eigenpair(rs, -delta_u, previous=plus, method=method)
    a = plus.phi / np.sqrt(rs.inner(plus.phi, plus.phi))
    b = minus.phi / np.sqrt(rs.inner(minus.phi, minus.phi))
    overlap = float(rs.inner(a, b))
    if overlap < 0.9:
        raise SpectralError(f"phi(+du) and phi(-du) overlap {overlap:.3f} < 0.9; extrapolation diverges")
    avg = 0.5 * (plus.phi + minus.phi)
    c = rs.inner(avg, rs.X0)
    phi0 = c * rs.X0
    info = {"delta_u": delta_u, "overlap": overlap, "c": float(c), "tau_plus": plus.tau, "tau_minus": minus.tau,
            "off_X0": float(np.sqrt(rs.inner(avg - phi0, avg - phi0)) / np.sqrt(rs.inner(avg, avg)))}
    return phi0, info


def compute_psi(rs: ReducedSystem, sol: EigenSolution, phi0: np.ndarray) -> EigenSolution:
    """psi_u = (phi_u - phi_0) / u."""
    sol.phi0 = phi0
    sol.psi = (sol.phi - phi0) / sol.u
    return sol


def eigen_bundle(rs: ReducedSystem, u: float, delta_u: float = 1e-3, u_min: float = 1e-3,
                 method: str = "auto") -> EigenSolution:
    phi0, info = compute_phi0(rs, delta_u, method)
    sol = continue_branch(rs, u, u_min=u_min, method=method)
    # same sign as phi0 so that psi stays bounded as u -> 0
    if rs.inner(sol.phi, phi0) < 0:
        sol.phi = -sol.phi
    sol.meta["phi0"] = info
    return compute_psi(rs, sol, phi0)


# ---------------------------------------------------------------- projections


def project_plus(rs: ReducedSystem, g: np.ndarray) -> np.ndarray:
    """<g X+> X+ (acts on the last axis)."""
    g = np.asarray(g, float)
    return np.multiply.outer(rs.inner(g, rs.Xp), rs.Xp)


def p_u(rs: ReducedSystem, sol: EigenSolution, g: np.ndarray) -> np.ndarray:
    """p_u g = -<(xi1+u) psi_u g> phi_u."""
    b = rs.flux(sol.u)
    return np.multiply.outer(-rs.inner(np.asarray(g, float), b * sol.psi), sol.phi)


def P_u(rs: ReducedSystem, sol: EigenSolution, g: np.ndarray) -> np.ndarray:
    """P_u g = -<psi_u g> (xi1+u) phi_u."""
    b = rs.flux(sol.u)
    return np.multiply.outer(-rs.inner(np.asarray(g, float), sol.psi), b * sol.phi)


def K_penalized(rs: ReducedSystem, sol: EigenSolution, g: np.ndarray, gamma: float,
                alpha: float | None = None, beta: float | None = None) -> np.ndarray:
    """K^p g = K g - alpha Pi+((xi1+u) g) - beta p_u g, with K = nu - L."""
    alpha = 2 * gamma if alpha is None else alpha
    beta = 2 * gamma if beta is None else beta
    g = np.asarray(g, float)
    b = rs.flux(sol.u)
    Kg = rs.nu * g - g @ rs.L.T
    return Kg - alpha * project_plus(rs, b * g) - beta * p_u(rs, sol, g)


# --------------------------------------------------------------- admissibility


@dataclass
class AdmissibilityData:
    A: np.ndarray
    mu: np.ndarray
    left: np.ndarray
    Y1: np.ndarray
    Y2: np.ndarray
    residual: float
    margin: float
    entries: dict


def build_admissibility(rs: ReducedSystem, sol: EigenSolution, alpha: float, beta: float, gamma: float) -> AdmissibilityData:
    """Matrix A of the penalty-moment system m' = (gamma I - A) m and its left eigenvectors.

    m = (<(xi1+u) X+ g>, <(xi1+u) X0 g>, <(xi1+u) psi_u g>). Y1, Y2 come
    from the two left eigenvectors with mu > gamma, i.e. the decaying
    moment modes e^{(gamma - mu) x}; killing their trace at x = 0 kills
    them for all x.
    """
    if sol.psi is None:
        raise SpectralError("eigen solution has no psi; call compute_psi first")
    u, tau = sol.u, sol.tau
    psiXp = rs.inner(sol.psi, rs.Xp)
    phiX0 = rs.inner(sol.phi, rs.X0)
    psiphi = rs.inner(sol.psi, sol.phi)
    c0 = rs.inner(sol.phi0, rs.X0)
    A = np.array([
        [alpha, 0.0, -u * beta * psiXp],
        [0.0, 0.0, -beta * phiX0],
        [alpha * psiXp, tau / u * c0, tau - beta * psiphi],
    ])
    mu, lv = sla.eig(A, left=True, right=False)
    if np.max(np.abs(np.imag(mu))) > 1e-12 * max(1.0, np.max(np.abs(mu))):
        raise SpectralError(f"A has complex eigenvalues {mu}")
    mu = np.real(mu)
    lv = np.real(lv)
    order = np.argsort(mu)[::-1]
    mu, lv = mu[order], lv[:, order]
    lv = lv / np.sqrt(np.sum(lv**2, axis=0))
    res = float(np.max(np.abs(lv.T @ A - mu[:, None] * lv.T)))
    diffs = [abs(mu[i] - mu[j]) for i in range(3) for j in range(i + 1, 3)]
    margin = float(min(diffs))
    if margin <= 0:
        raise SpectralError(f"A has a repeated eigenvalue: {mu}")
    decaying = np.nonzero(mu > gamma)[0]
    if len(decaying) != 2:
        raise SpectralError(f"expected two eigenvalues of A above gamma={gamma}, got {mu}")
    basis = np.stack([rs.Xp, rs.X0, sol.psi])
    Y1 = lv[:, decaying[0]] @ basis
    Y2 = lv[:, decaying[1]] @ basis
    entries = {"psi_Xp": psiXp, "phi_X0": phiX0, "psi_phi": psiphi, "phi0_X0": c0, "tau": tau, "u": u}
    return AdmissibilityData(A, mu, lv, Y1, Y2, res, margin, entries)


def admissibility_residual(rs: ReducedSystem, g0: np.ndarray, adm: AdmissibilityData, u: float) -> np.ndarray:
    b = rs.flux(u)
    return np.array([rs.inner(b * adm.Y1, g0), rs.inner(b * adm.Y2, g0)])


def penalty_moments(rs: ReducedSystem, sol: EigenSolution, g: np.ndarray) -> np.ndarray:
    """(<(xi1+u) X+ g>, <(xi1+u) psi_u g>) along the leading axes of g."""
    b = rs.flux(sol.u)
    return np.stack([rs.inner(g, b * rs.Xp), rs.inner(g, b * sol.psi)], axis=-1)
