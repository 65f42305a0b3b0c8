"""Acceptance criteria at desk scale (16 nodes per axis, 200 and 400 space cells).

Each test prints one PASS/FAIL line, then asserts.
"""

import numpy as np
import pytest

from artifact.config import load_config
from artifact.grids import build_velocity_grid
from artifact.kinetic_weight import alpha_integrability
from artifact.model import build_model, with_space
from artifact.pipeline import assemble_summary, eigen_records, refinement_residual, run_norms, run_solve, verify_lemma
from artifact.spectral import SQRT_5_3, build_basis

pytestmark = pytest.mark.acceptance


def report(capsys, number, ok, detail):
    with capsys.disabled():
        print(f"\n{'PASS' if ok else 'FAIL'} criterion {number}: {detail}")
    assert ok, detail


@pytest.fixture(scope="module")
def cfg16():
    return load_config(None, {})


@pytest.fixture(scope="module")
def model16(cfg16, cache_dir):
    return build_model(cfg16, cache_dir)


@pytest.fixture(scope="module")
def tuned(model16):
    return run_solve(model16)


@pytest.fixture(scope="module")
def tuned_fine(model16):
    return run_solve(with_space(model16, model16.space.refined()))


@pytest.fixture(scope="module")
def norms(tuned):
    return run_norms(tuned)[0]


@pytest.fixture(scope="module")
def norms_fine(tuned_fine):
    return run_norms(tuned_fine)[0]


def test_basis_identities(capsys):
    b = build_basis(build_velocity_grid(6.0, 16))
    F, G = b.flux(), b.gram()
    dp, d0, dg = abs(F[0, 0] - SQRT_5_3), abs(F[1, 1]), float(np.max(np.abs(G - np.eye(5))))
    ok = dp < 1e-2 and dg < 1e-3 and d0 < 1e-3
    report(capsys, 1, ok, f"<xi1 X+^2> = {F[0, 0]:.6f} (sqrt(5/3) = {SQRT_5_3:.6f}), "
                          f"<xi1 X0^2> = {F[1, 1]:.1e}, orthonormality defect {dg:.1e}")


def test_collision_operator_refinement(capsys, cache_dir):
    coarse = assemble_summary(load_config(None, {"vel.radius": 5.0, "vel.n": 12}), cache_dir)
    fine = assemble_summary(load_config(None, {}), cache_dir)
    rc, rf = max(coarse["ker_residuals"].values()), max(fine["ker_residuals"].values())
    drift = abs(fine["k_theta_sup"] / coarse["k_theta_sup"] - 1)
    ok = coarse["kernel_asymmetry"] == 0.0 and fine["kernel_asymmetry"] == 0.0 and rf < rc and drift <= 0.2
    report(capsys, 2, ok, f"k symmetric; Ker residual {rc:.2e} -> {rf:.2e}; k_theta bound drift {drift:.1%}")


def test_velocity_lemma(capsys, cfg16):
    _, s = verify_lemma(cfg16, "velocity", 10_000, int(cfg16["seed"]))
    report(capsys, 3, s["violations"] == 0, f"10000 samples, {s['violations']} violations, "
                                            f"min margin {s['min_margin']:.2e}")


def test_chi_contract(capsys, cfg16):
    _, s = verify_lemma(cfg16, "chi", 100_001, 0)
    report(capsys, 4, s["pass"], f"chi(1/4) = {s['chi_quarter']}, chi(5) = {s['chi_five']}, "
                                 f"max(s chi' - 4 chi) = {s['max_s_chi_prime_minus_4chi']:.2e}, "
                                 f"max chi' = {s['max_chi_prime']:.3f}")


def test_nln_constants(capsys, cfg16):
    n = int(cfg16["nln.samples"])
    _, s = verify_lemma(cfg16, "nln", n, int(cfg16["seed"]))
    regs = s["regimes"]
    ok = n >= 200 and all(abs(r["drift"]) <= 0.3 and np.isfinite(r["constant"]) for r in regs.values())
    detail = ", ".join(f"{k} {r['constant']:.3g} (drift {r['drift']:.1e})" for k, r in regs.items())
    report(capsys, 5, ok, f"{n} samples per regime; {detail}")


def test_eigen_branch(capsys, cfg16, cache_dir):
    us = [0.01, 0.02, 0.04]
    fine = eigen_records(cfg16, cache_dir, us)
    coarse = eigen_records(load_config(None, {"vel.n": 8}), cache_dir, us)
    r = [e["tau_over_u"] for e in fine]
    spread = (max(r) - min(r)) / abs(np.mean(r))
    norm = max(e["normalization_residual"] for e in fine)
    ratios = [f[k] / c[k] for f, c in zip(fine, coarse) for k in ("w_phi_sup", "w_psi_sup")]
    ok = spread < 0.25 and norm < 1e-10 and all(0.5 <= q <= 2.0 for q in ratios)
    report(capsys, 6, ok, f"tau/u spread {spread:.3f}, normalization residual {norm:.1e}, "
                          f"weighted sup ratios 16 vs 8 nodes in [{min(ratios):.3f}, {max(ratios):.3f}]")


def test_nonlinear_solve(capsys, model16, tuned, tuned_fine):
    eps = float(model16.cfg["bc.eps"])
    a, b = run_solve(model16, eps, tune=False), run_solve(model16, eps / 2, tune=False)
    ca, cb = a.summary["C"], b.summary["C"]
    ra, rb = refinement_residual(tuned), refinement_residual(tuned_fine)
    ok = a.summary["converged"] and b.summary["converged"] and abs(cb / ca - 1) <= 0.2 and rb["sup"] < ra["sup"]
    report(capsys, 7, ok, f"Picard converged in {a.summary['picard_iterations']} iterations; "
                          f"C = {ca:.4g} (eps), {cb:.4g} (eps/2); "
                          f"residual sup {ra['sup']:.2e} -> {rb['sup']:.2e} under space refinement")


def test_admissibility_and_penalty(capsys, tuned):
    s = tuned.summary
    tol = float(tuned.model.cfg["tune.tol"])
    r = float(np.max(np.abs(s["admissibility_residual"])))
    pm = max(float(np.max(np.abs(s["penalty_moments"][k]))) for k in ("x0", "x_mid", "xL"))
    report(capsys, 8, r < 1e-8 and pm < 10 * tol, f"max |r_i| = {r:.2e}, penalty moments at x in {{0, L/2, L}} "
                                                  f"max {pm:.2e} (< {10 * tol:.0e})")


def test_decay(capsys, model16, norms):
    g0 = model16.cfg.gamma0
    s1, s2 = norms["decay_slope_wf"], norms["decay_slope_c1"]
    report(capsys, 9, s1 <= -g0 and s2 <= -g0, f"slopes over [1, L/2]: w f {s1:.3e}, w alpha d_x f {s2:.3e} "
                                               f"(need <= {-g0:.1e})")


def test_regularity(capsys, norms, norms_fine):
    c1, c1f = norms["weighted_c1_sup"], norms_fine["weighted_c1_sup"]
    c1_drift = abs(c1f / c1 - 1)
    w_drift = max(abs(norms_fine["w1p"][p] / norms["w1p"][p] - 1) for p in norms["w1p"])
    h = norms_fine["h1loc"]
    dich = norms_fine["dichotomy"]
    growth = dich["unweighted"][-1] / dich["unweighted"][0]
    flat = max(dich["weighted"]) / min(dich["weighted"])
    gaps = (norms["fd_vs_equation_gap"], norms_fine["fd_vs_equation_gap"])
    ok = (np.isfinite(c1) and c1_drift <= 0.15
          and abs(norms_fine["grazing_slope"] + 1) <= 0.2
          and w_drift <= 0.15
          and h["spread"] <= 0.1 and all(np.diff(h["h1"]) > 0)
          and growth > 100 and flat < 1.1
          and gaps[1] < gaps[0] and gaps[1] < 0.1)
    report(capsys, 10, ok, f"weighted C1 sup {c1:.4e} -> {c1f:.4e}; grazing exponent {norms_fine['grazing_slope']:.3f}; "
                           f"W1p drift {w_drift:.1%}; H1_loc increment spread {h['spread']:.1%}; "
                           f"unweighted sup x{growth:.0f} vs weighted x{flat:.3f}; "
                           f"FD gap {gaps[0]:.3f} -> {gaps[1]:.3f}")


def test_alpha_integrability(capsys):
    val = alpha_integrability(1.0, 0.0)
    ref = 2 * np.log(1 + np.sqrt(2))
    report(capsys, 11, abs(val - ref) < 1e-4, f"{val:.10f} vs 2 ln(1 + sqrt 2) = {ref:.10f}")
