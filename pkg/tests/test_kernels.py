import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from artifact import _core_py, kernels
from artifact.collision import GammaEvaluator
from artifact.grids import build_velocity_grid

try:
    from artifact import _core
except ImportError:  # fallback-only install
    _core = None

needs_core = pytest.mark.skipif(_core is None, reason="compiled core not built")


def test_backend_reported():
    assert kernels.BACKEND in ("cython", "python")


@settings(max_examples=40, deadline=None)
@given(st.floats(1e-4, 50.0), st.floats(-5.0, 5.0), st.floats(-3.0, 3.0), st.booleans())
def test_exp_sweep_exact_for_constant_source(lam, s0, c0, forward):
    # c' = -l c + s0; backward sweeps carry the outflow sign l < 0 and start at x_J
    x = np.concatenate([[0.0], np.cumsum(np.geomspace(1e-3, 0.5, 30))])
    l = lam if forward else -lam
    s = np.full((len(x), 1), s0)
    c = _core_py.exp_sweep(np.array([l]), x, s, np.array([c0]), 0.0, forward)[:, 0]
    x_start = 0.0 if forward else x[-1]
    exact = c0 * np.exp(-l * (x - x_start)) - s0 / l * np.expm1(-l * (x - x_start))
    assert np.allclose(c, exact, rtol=1e-10, atol=1e-12)


def test_exp_sweep_exact_for_damped_linear_source():
    # c' = -lam c + e^{-k x} (a + b x), c(0) = 0, solved in closed form
    lam, k, a, b = 3.0, 0.4, 1.0, -0.5
    x = np.linspace(0.0, 4.0, 9)
    s = (np.exp(-k * x) * (a + b * x))[:, None]
    c = _core_py.exp_sweep(np.array([lam]), x, s, np.zeros(1), k, True)[:, 0]
    r = lam - k
    part = np.exp(-k * x) * (a / r + b * (x / r - 1 / r**2))
    exact = part - (a / r - b / r**2) * np.exp(-lam * x)
    assert np.allclose(c, exact, rtol=1e-12, atol=1e-14)


def test_phi_weights_continuous_across_series_switch():
    mu = np.array([_core_py._SMALL * (1 - 1e-9), _core_py._SMALL * (1 + 1e-9)])
    e2, e3 = _core_py.phi_weights(mu)
    assert abs(e2[0] - e2[1]) < 1e-10 and abs(e3[0] - e3[1]) < 1e-10


@needs_core
@settings(max_examples=25, deadline=None)
@given(st.integers(2, 40), st.integers(1, 8), st.floats(0.0, 2.0), st.booleans(), st.integers(0, 2**31))
def test_compiled_sweep_matches_fallback(J, K, kappa, forward, seed):
    r = np.random.default_rng(seed)
    lam = r.uniform(-2.0, 20.0, K)
    x = np.concatenate([[0.0], np.cumsum(r.uniform(1e-4, 0.3, J))])
    s = r.normal(size=(J + 1, K))
    c0 = r.normal(size=K)
    a = _core.exp_sweep(lam, x, s, c0, kappa, forward)
    b = _core_py.exp_sweep(lam, x, s, c0, kappa, forward)
    assert np.allclose(a, b, rtol=1e-10, atol=1e-10 * np.max(np.abs(b)))


@needs_core
def test_compiled_sweep_complex_matches_fallback(rng):
    lam = rng.uniform(0.1, 5, 6) + 1j * rng.uniform(-1, 1, 6)
    x = np.linspace(0, 2, 15)
    s = rng.normal(size=(15, 6)) + 1j * rng.normal(size=(15, 6))
    c0 = np.zeros(6, complex)
    assert np.allclose(_core.exp_sweep(lam, x, s, c0, 0.1, True), _core_py.exp_sweep(lam, x, s, c0, 0.1, True))


@needs_core
def test_compiled_kernel_block_matches_fallback(rng):
    a, b = rng.normal(size=(30, 3)), rng.normal(size=(40, 3))
    b[3] = a[5]  # coincident pair
    k1 = _core.kernel_block(a, b, -0.4, 1.6)
    k2 = _core_py.kernel_block(a, b, -0.4, 1.6)
    assert np.allclose(k1, k2, rtol=1e-13, atol=0)
    assert k1[5, 3] == 0.0


@needs_core
@pytest.mark.parametrize("threads", [1, 2])
def test_compiled_gamma_gain_matches_fallback(threads, rng):
    g = build_velocity_grid(5.0, 6)
    ge = GammaEvaluator(g, method="product")
    F = rng.normal(size=(3, g.size))
    G = rng.normal(size=(3, g.size))
    args = (ge.base1, ge.frac1, ge.base2, ge.frac2, ge.weight, ge.ptr, g.shape)
    for A, B in ((F, F), (F, G)):
        c = _core.gamma_gain(A, B, *args, threads, None)
        p = _core_py.gamma_gain(A, B, *args, 1, None)
        assert np.allclose(c, p, rtol=1e-12, atol=1e-12 * np.max(np.abs(p)))


@pytest.mark.parametrize("mu", [0.0, 1e-8, -3e-4, 2e-3, 0.049, 0.051, 0.3, -2.0, 7.5, 60.0])
def test_phi_weights_against_quadrature(mu):
    from scipy.integrate import quad
    e2, e3 = _core_py.phi_weights(np.array([mu]))
    r2 = quad(lambda t: (1 - t) * np.exp(-mu * t), 0, 1, epsabs=0, epsrel=1e-13)[0]
    r3 = quad(lambda t: t * np.exp(-mu * t), 0, 1, epsabs=0, epsrel=1e-13)[0]
    assert e2[0] == pytest.approx(r2, rel=1e-13)
    assert e3[0] == pytest.approx(r3, rel=1e-13)
