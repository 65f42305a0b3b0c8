"""Assemble every solver object from a configuration."""

from __future__ import annotations

import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .collision import CollisionOperator, GammaEvaluator, assemble_collision, default_gamma_method
from .config import Config, floats
from .grids import SpatialGrid, VelocityGrid, build_spatial_grid, build_velocity_grid, sqrt_maxwellian
from .spectral import AdmissibilityData, EigenSolution, ReducedSystem, build_admissibility, build_reduced_system, eigen_bundle
from .transport import BoundaryFamily, NonlinearSolver, PenalizedProblem, gaussian_bumps

log = logging.getLogger(__name__)


@dataclass
class Model:
    cfg: Config
    grid: VelocityGrid
    space: SpatialGrid
    op: CollisionOperator
    rs: ReducedSystem
    sol: EigenSolution
    adm: AdmissibilityData
    prob: PenalizedProblem
    gamma_eval: GammaEvaluator | None
    solver: NonlinearSolver | None

    @property
    def u(self) -> float:
        return self.sol.u

    @property
    def theta(self) -> float:
        return float(self.cfg["weight.theta"])

    def base_profile(self) -> np.ndarray:
        """b(xi) = exp(-|xi|^2) on the reduced nodes."""
        return np.exp(-np.sum(self.rs.xi**2, axis=1))

    def family(self, eps: float | None = None) -> BoundaryFamily:
        eps = float(self.cfg["bc.eps"]) if eps is None else eps
        bumps = gaussian_bumps(self.rs.xi, floats(self.cfg["bc.bump_centers"]), float(self.cfg["bc.bump_width"]))
        return BoundaryFamily(self.base_profile(), bumps, eps)


def velocity_grid(cfg: Config) -> VelocityGrid:
    grid = build_velocity_grid(float(cfg["vel.radius"]), int(cfg["vel.n"]), str(cfg["vel.scheme"]))
    grid.check_no_grazing(float(cfg["flow.u"]))
    return grid


def spatial_grid(cfg: Config) -> SpatialGrid:
    return build_spatial_grid(cfg.L, int(cfg["space.n"]), float(cfg["space.grade"]), float(cfg["space.min_cell"]))


def gamma_evaluator(cfg: Config, grid: VelocityGrid, outputs: np.ndarray, threads: int = 1) -> GammaEvaluator:
    method = cfg["gamma.method"]
    if method == "auto":
        method = default_gamma_method(grid, int(cfg["gamma.product_max_n"]))
    return GammaEvaluator(grid, outputs, method, int(cfg["gamma.samples"]), int(cfg["seed"]), threads)


def build_model(cfg: Config, cache_dir: str | Path | None = None, threads: int = 1, with_gamma: bool = True,
                u: float | None = None, space: SpatialGrid | None = None) -> Model:
    grid = velocity_grid(cfg)
    space = spatial_grid(cfg) if space is None else space
    op = assemble_collision(grid, str(cfg["kernel.constants"]), cache_dir)
    rs = build_reduced_system(op, str(cfg["solver.symmetry"]), bool(cfg["kernel.conservative"]))
    u = float(cfg["flow.u"]) if u is None else u
    sol = eigen_bundle(rs, u, float(cfg["eigen.delta_u"]), float(cfg["eigen.u_min"]))
    alpha, beta = cfg.alpha_beta
    gamma = cfg.gamma
    adm = build_admissibility(rs, sol, alpha, beta, gamma)
    prob = PenalizedProblem(rs, sol, space, gamma, alpha, beta)
    gev = gamma_evaluator(cfg, grid, rs.sym.reps, threads) if with_gamma else None
    solver = None
    if gev is not None:
        solver = NonlinearSolver(prob, gev, str(cfg["solver.linear"]), float(cfg["solver.tol_nl"]),
                                 int(cfg["solver.max_iter"]), float(cfg["weight.theta"]))
    return Model(cfg, grid, space, op, rs, sol, adm, prob, gev, solver)


def with_space(model: Model, space: SpatialGrid) -> Model:
    """Same operators and eigen data on another spatial grid."""
    alpha, beta = model.cfg.alpha_beta
    prob = PenalizedProblem(model.rs, model.sol, space, model.cfg.gamma, alpha, beta)
    solver = None
    if model.gamma_eval is not None:
        s = model.solver
        solver = NonlinearSolver(prob, model.gamma_eval, s.method, s.tol, s.max_iter, s.theta)
    return Model(model.cfg, model.grid, space, model.op, model.rs, model.sol, model.adm, prob,
                 model.gamma_eval, solver)
