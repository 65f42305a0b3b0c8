"""Kinetic weight alpha, its cutoff chi, and quadrature checks of the velocity
lemmas and of the singular integral bounds built on 1/alpha.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy import integrate, special

from .collision import collision_frequency_closed

C_GROWTH = 1.0 / 8.0
SLACK = 1e-12


class WeightError(ValueError):
    pass


# ------------------------------------------------------------------- cutoff


def chi(s):
    """C^1 cutoff: s on [0, 1/2], 1 - (2-s)^3/6.75 on [1/2, 2], 1 beyond."""
    s = np.asarray(s, float)
    if np.any(s < 0):
        raise WeightError("chi is defined for s >= 0")
    mid = 1.0 - (2.0 - s) ** 3 / 6.75
    return np.where(s <= 0.5, s, np.where(s >= 2.0, 1.0, mid))


def chi_prime(s):
    s = np.asarray(s, float)
    if np.any(s < 0):
        raise WeightError("chi is defined for s >= 0")
    mid = (2.0 - s) ** 2 / 2.25
    return np.where(s <= 0.5, 1.0, np.where(s >= 2.0, 0.0, mid))


def chi_contract(n: int = 100_001, smax: float = 3.0) -> dict:
    s = np.linspace(0.0, smax, n)
    c, cp = chi(s), chi_prime(s)
    return {
        "chi_quarter": float(chi(0.25)),
        "chi_five": float(chi(5.0)),
        "max_s_chi_prime_minus_4chi": float(np.max(s * cp - 4 * c)),
        "max_chi_prime": float(np.max(cp)),
        "min_chi_prime": float(np.min(cp)),
        "monotone": bool(np.all(np.diff(c) >= 0)),
    }


# ------------------------------------------------------------------- weight


@dataclass(frozen=True)
class WeightSpec:
    nu0: float
    u: float
    c: float = C_GROWTH

    def __post_init__(self):
        if not self.nu0 > 0:
            raise WeightError("nu0 must be positive")

    @property
    def rate(self) -> float:
        return self.c * self.nu0

    def alpha_tilde(self, x, xi1):
        x = np.asarray(x, float)
        if np.any(x < 0):
            raise WeightError("alpha is defined for x >= 0")
        return np.hypot(np.asarray(xi1, float) + self.u, self.rate * x)

    def alpha(self, x, xi1):
        return chi(self.alpha_tilde(x, xi1))


# --------------------------------------------------------- velocity lemmas


def sample_characteristics(n: int, u: float, rng: np.random.Generator) -> tuple[np.ndarray, ...]:
    """Admissible (x, xi1, s): x >= 0 and x - s (xi1+u) >= 0, s >= 0."""
    b = rng.normal(0.0, 2.0, n)
    near = rng.random(n) < 0.2
    b[near] = np.sign(rng.standard_normal(near.sum())) * 10 ** rng.uniform(-8, 0, near.sum())
    b[rng.random(n) < 0.01] = 0.0
    s = 10 ** rng.uniform(-4, 1.5, n)
    s[rng.random(n) < 0.01] = 0.0
    extra = 10 ** rng.uniform(-6, 1.5, n)
    extra[rng.random(n) < 0.05] = 0.0
    x = np.maximum(s * b, 0.0) + extra
    return x, b - u, s


def verify_velocity_lemma(spec: WeightSpec, n: int, seed: int) -> dict:
    """Both two-sided bounds along characteristics; margins are relative."""
    rng = np.random.default_rng(seed)
    x, xi1, s = sample_characteristics(n, spec.u, rng)
    back = x - s * (xi1 + spec.u)
    back = np.maximum(back, 0.0)
    out = {}
    for name, fn, k in (("alpha_tilde", spec.alpha_tilde, 0.5), ("alpha", spec.alpha, 2.0)):
        mid = fn(x, xi1)
        prev = fn(back, xi1)
        g = np.exp(k * spec.rate * s)
        lo, hi = prev / g, prev * g
        scale = np.maximum(mid, 1e-300)
        margin = np.minimum(mid - lo, hi - mid) / scale
        out[name] = {"lhs": mid, "rhs_low": lo, "rhs_high": hi, "margin": margin,
                     "violations": int(np.sum(margin < -SLACK))}
    out["x"], out["xi1"], out["s"] = x, xi1, s
    out["violations"] = out["alpha_tilde"]["violations"] + out["alpha"]["violations"]
    return out


# --------------------------------------------------------------- NLN checks


def default_t(nu0: float) -> float:
    return 40.0 / nu0


def default_C(theta: float) -> float:
    """Gaussian rate of the weighted kernel: 1/8 - 2 theta^2 > 0 for theta < 1/4."""
    return 1.0 / 8.0 - 2.0 * theta**2


@lru_cache(maxsize=8)
def _gl(n: int):
    return np.polynomial.legendre.leggauss(n)


def _panels(a: float, b: float, n_pan: int, order: int) -> tuple[np.ndarray, np.ndarray]:
    t, w = _gl(order)
    edges = np.linspace(a, b, n_pan + 1)
    h = np.diff(edges)
    nodes = (edges[:-1, None] + 0.5 * h[:, None] * (t[None, :] + 1)).ravel()
    weights = (0.5 * h[:, None] * w[None, :]).ravel()
    return nodes, weights


def _sigma_rule(T: float, rate: float, level: int, order: int = 8, ratio: float = 0.2,
                floor: float = 1e-14) -> tuple[np.ndarray, np.ndarray]:
    """GL panels on [0, min(T, 40/rate)]: uniform on the decay scale 1/rate,
    graded geometrically toward both ends where 1/alpha peaks.
    """
    top = min(T, 40.0 / rate)
    n_uni = max(1, int(np.ceil(top * rate * level)))
    cuts = [np.linspace(0.0, top, n_uni + 1)]
    d = min(top, 1.0 / rate) * ratio
    geo = []
    while d > floor * max(top, 1.0):
        geo.append(d)
        d *= ratio
    geo = np.array(geo)
    cuts += [geo, top - geo]
    cuts = np.unique(np.clip(np.concatenate(cuts), 0.0, top))
    t, w = _gl(order)
    h = np.diff(cuts)
    nodes = (cuts[:-1, None] + 0.5 * h[:, None] * (t[None, :] + 1)).ravel()
    weights = (0.5 * h[:, None] * w[None, :]).ravel()
    return nodes, weights


def _transverse_kernel(C: float):
    """int over (xi2', xi3') of e^{-C|d|^2}/|d| as a function of d1."""
    pref = np.pi**1.5 / np.sqrt(C)
    return lambda d1: pref * special.erfc(np.sqrt(C) * np.abs(d1))


def _transverse_two(C: float, theta: float, xi1_nodes: np.ndarray) -> np.ndarray:
    """Transverse integral of H(|xi''|), H(r) = int e^{-theta|xi'|^2} e^{-C|xi'-xi''|^2}/|xi'-xi''| dxi'."""
    a = theta + C

    def H(r):
        r = max(r, 1e-12)
        bb = 2 * theta * r
        inner = 0.5 * np.sqrt(np.pi / a) * np.exp(bb * bb / (4 * a) - theta * r * r) * special.erf(bb / (2 * np.sqrt(a)))
        return 2 * np.pi / (theta * r) * inner

    out = np.empty(len(xi1_nodes))
    for i, z in enumerate(xi1_nodes):
        out[i] = np.pi * integrate.quad(lambda s: H(np.sqrt(z * z + s)), 0.0, np.inf, limit=200)[0]
    return out


class NLNIntegrator:
    """Singular integrals of 1/alpha against velocity kernels, reduced to one
    dimension in xi1' (alpha only depends on xi1'), with a sinh substitution
    resolving the 1/|xi1'+u| peak of width c nu0 y.
    """

    def __init__(self, spec: WeightSpec, C: float, theta: float = 0.1, radius: float = 8.0, level: int = 1):
        self.spec, self.C, self.theta, self.radius, self.level = spec, C, theta, radius, level
        self._G = _transverse_kernel(C)
        self._two_table = None

    def _xi1_rule(self, y: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Nodes/weights in xi1', one row per station y, for 1/alpha(y, xi1') times a smooth kernel."""
        y = np.atleast_1d(np.asarray(y, float))
        eps = np.maximum(self.spec.rate * y, 1e-300)[:, None]
        c0 = -self.spec.u
        R = self.radius
        nodes, weights = [], []
        for sgn, span in ((1.0, R - c0), (-1.0, R + c0)):
            tmax = np.arcsinh(span / eps)
            npan = max(4, int(np.ceil(tmax.max() * 2 * self.level)))
            t, w = _panels(0.0, 1.0, npan, 8)
            tt = tmax * t[None, :]
            nodes.append(c0 + sgn * eps * np.sinh(tt))
            weights.append(tmax * w[None, :] * eps * np.cosh(tt))
        return np.concatenate(nodes, axis=1), np.concatenate(weights, axis=1)

    def xi_integral(self, y, xi1: float, variant: str) -> np.ndarray:
        y = np.atleast_1d(np.asarray(y, float))
        z, wz = self._xi1_rule(y)
        inv_alpha = 1.0 / self.spec.alpha(np.broadcast_to(y[:, None], z.shape), z)
        if variant == "nln":
            ker = self._G(xi1 - z)
        elif variant == "inner":
            ker = np.pi / self.C * np.exp(-self.C * z * z)
        elif variant == "two":
            ker = self._two(z)
        else:
            raise WeightError(f"unknown NLN variant {variant!r}")
        return np.sum(wz * ker * inv_alpha, axis=1)

    def _two(self, z: np.ndarray) -> np.ndarray:
        if self._two_table is None:
            grid = np.linspace(-self.radius - 1, self.radius + 1, 241)
            self._two_table = (grid, _transverse_two(self.C, self.theta, grid))
        g, v = self._two_table
        return np.interp(z, g, v)

    def integral(self, x: float, xi: np.ndarray, t: float, T: float, variant: str = "nln") -> float:
        """int_0^T dsigma e^{-k nu(xi) sigma} I(x - sigma (xi1+u)), k = 1/2 for the plain lemma."""
        xi = np.asarray(xi, float)
        b = xi[0] + self.spec.u
        if x < 0 or x - T * b < -1e-14 * max(1.0, abs(x)):
            raise WeightError("inadmissible geometry: need x >= 0 and x - T (xi1+u) >= 0")
        nu = float(collision_frequency_closed(xi[None, :])[0])
        k = 0.5 if variant == "nln" else 1.0
        sig, ws = _sigma_rule(T, k * nu, self.level)
        y = np.maximum(x - sig * b, 0.0)
        vals = self.xi_integral(y, xi[0], variant)
        return float(np.sum(ws * np.exp(-k * nu * sig) * vals))

    def ratio(self, x: float, xi: np.ndarray, t: float, T: float, variant: str = "nln") -> tuple[float, float]:
        value = self.integral(x, xi, t, T, variant)
        a = float(self.spec.alpha(x, xi[0]))
        norm = t if (T > 1 or variant != "nln") else np.sqrt(T) + T * np.log(t)
        return value, value * a / norm


def sample_nln_points(n: int, u: float, T: float, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    xi = rng.normal(0.0, 1.2, (n, 3))
    near = rng.random(n) < 0.3
    xi[near, 0] = -u + np.sign(rng.standard_normal(near.sum())) * 10 ** rng.uniform(-6, -0.5, near.sum())
    b = xi[:, 0] + u
    off = 10 ** rng.uniform(-6, 1, n)
    x = np.maximum(T * b, 0.0) + off
    return x, xi


def nln_regime(spec: WeightSpec, C: float, theta: float, t: float, T: float, variant: str, n: int, seed: int,
               level: int = 1) -> dict:
    rng = np.random.default_rng(seed)
    x, xi = sample_nln_points(n, spec.u, T, rng)
    integ = NLNIntegrator(spec, C, theta, level=level)
    vals = np.empty(n)
    ratios = np.empty(n)
    for i in range(n):
        vals[i], ratios[i] = integ.ratio(float(x[i]), xi[i], t, T, variant)
    return {"variant": variant, "T": T, "t": t, "x": x, "xi": xi, "value": vals, "ratio": ratios,
            "constant": float(np.max(ratios))}


def nln_regimes(t: float) -> list[tuple[str, str, float]]:
    return [("large", "nln", t), ("small", "nln", 1e-3), ("inner", "inner", t), ("two", "two", t)]


# --------------------------------------------------------- integrability


def alpha_integrability(p: float, delta: float) -> float:
    """int_delta^1 dxi1 int_0^1 dx (xi1^2 + x^2)^{-p/2}."""
    if p > 2:
        raise WeightError("p > 2 is not integrable near the grazing set")
    if p < 0:
        raise WeightError("p must be nonnegative")
    if not 0 <= delta < 1:
        raise WeightError("delta must lie in [0, 1)")
    if delta == 0:
        if p >= 2:
            return float("inf")
        val, _ = integrate.quad(lambda ph: np.cos(ph) ** (p - 2), 0.0, np.pi / 4, epsabs=1e-14, epsrel=1e-13)
        return 2.0 * val / (2.0 - p)

    def inner(a):
        return a ** (-p) * special.hyp2f1(0.5, p / 2, 1.5, -1.0 / (a * a))

    pts = [d for d in (1e-3, 1e-2, 1e-1) if delta < d < 1]
    val, _ = integrate.quad(inner, delta, 1.0, points=pts or None, limit=400, epsabs=1e-13, epsrel=1e-12)
    return float(val)


def h1_oracle(delta: float) -> float:
    """int_delta^1 (1/x) arctan(1/x) dx, the p = 2 reference."""
    val, _ = integrate.quad(lambda s: np.arctan(1 / s) / s, delta, 1.0, limit=400, epsabs=1e-13, epsrel=1e-12,
                            points=[d for d in (1e-4, 1e-3, 1e-2, 1e-1) if delta < d < 1] or None)
    return float(val)
