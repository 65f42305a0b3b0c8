"""NumPy reference implementations of the compiled kernels in ``_core.pyx``.

Signatures and results match the compiled module; this path is used when the
extension is not built or ``ARTIFACT_PURE_PYTHON=1`` is set.
"""

from __future__ import annotations

import numpy as np
import scipy.sparse as sp

_SMALL = 0.05


def phi_weights(mu: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """E2(mu) = int_0^1 (1-t) e^{-mu t} dt and E3(mu) = int_0^1 t e^{-mu t} dt."""
    mu = np.asarray(mu)
    small = np.abs(mu) < _SMALL
    m = np.where(small, 1.0, mu)
    if np.iscomplexobj(m):
        em = np.exp(-m) - 1.0
    else:
        em = np.expm1(-m)
    e2 = (m + em) / m**2
    e3 = (-em - m * (1.0 + em)) / m**2
    # series sum_k (-mu)^k / (k+2)! and (k+1) (-mu)^k / (k+2)!
    t = np.full_like(mu, 0.5, dtype=np.result_type(mu, float))
    s2 = np.zeros_like(t)
    s3 = np.zeros_like(t)
    for k in range(10):
        s2 = s2 + t
        s3 = s3 + (k + 1) * t
        t = t * (-mu / (k + 3))
    return np.where(small, s2, e2), np.where(small, s3, e3)


def exp_sweep(lam, x, s, c_start, kappa=0.0, forward=True):
    """Exact solution of c' = -lam c + s on each cell.

    ``s`` holds node values of e^{-kappa x} times a piecewise linear
    function, so the per-cell integral is exact. ``lam`` has shape (K,),
    ``s`` shape (J+1, K). Forward sweeps start from ``c_start`` at x_0,
    backward sweeps from ``c_start`` at x_J.
    """
    lam = np.asarray(lam)
    x = np.asarray(x, float)
    s = np.asarray(s)
    dtype = np.result_type(lam, s, np.asarray(c_start), float)
    J = len(x) - 1
    c = np.empty((J + 1, lam.shape[0]), dtype=dtype)
    h = np.diff(x)
    if forward:
        c[0] = c_start
        for j in range(J):
            a = lam * h[j]
            b = kappa * h[j]
            e2, e3 = phi_weights(a - b)
            c[j + 1] = np.exp(-a) * c[j] + h[j] * (np.exp(-b) * e3 * s[j] + e2 * s[j + 1])
    else:
        c[J] = c_start
        for j in range(J - 1, -1, -1):
            a = lam * h[j]
            b = kappa * h[j]
            e2, e3 = phi_weights(b - a)
            c[j] = np.exp(a) * c[j + 1] - h[j] * (e2 * s[j] + np.exp(b) * e3 * s[j + 1])
    return c


def kernel_block(rows, cols, ck1, ck2):
    """Grad kernel k(rows_i, cols_j); coincident pairs are set to 0."""
    rows = np.asarray(rows, float)
    cols = np.asarray(cols, float)
    diff = rows[:, None, :] - cols[None, :, :]
    d2 = np.einsum("ijk,ijk->ij", diff, diff)
    a2 = np.einsum("ik,ik->i", rows, rows)[:, None]
    b2 = np.einsum("jk,jk->j", cols, cols)[None, :]
    zero = d2 == 0.0
    d2s = np.where(zero, 1.0, d2)
    d = np.sqrt(d2s)
    k1 = d * np.exp(-(a2 + b2) / 4.0)
    k2 = np.exp(-d2s / 8.0 - (a2 - b2) ** 2 / (8.0 * d2s)) / d
    out = ck1 * k1 + ck2 * k2
    out[zero] = 0.0
    return out


def _interp_matrix(base, frac, shape):
    n1, n2, n3 = shape
    S = base.shape[0]
    ok = base >= 0
    rows, cols, vals = [], [], []
    idx = np.nonzero(ok)[0]
    b = base[idx]
    t = frac[idx]
    for c1 in (0, 1):
        w1 = t[:, 0] if c1 else 1 - t[:, 0]
        for c2 in (0, 1):
            w2 = t[:, 1] if c2 else 1 - t[:, 1]
            for c3 in (0, 1):
                w3 = t[:, 2] if c3 else 1 - t[:, 2]
                rows.append(idx)
                cols.append(b + c1 * n2 * n3 + c2 * n3 + c3)
                vals.append(w1 * w2 * w3)
    n = n1 * n2 * n3
    return sp.csr_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(S, n)
    )


def gamma_gain(F, G, base1, frac1, base2, frac2, weight, owner_ptr, shape, threads=1, cache=None):
    """out[x, i] = sum_s weight_s (F(v')G(v*') + G(v')F(v*')) over samples of output i."""
    F = np.ascontiguousarray(F, float)
    G = np.ascontiguousarray(G, float)
    if cache is not None and "P1" in cache:
        P1, P2 = cache["P1"], cache["P2"]
    else:
        P1 = _interp_matrix(base1, frac1, shape)
        P2 = _interp_matrix(base2, frac2, shape)
        if cache is not None:
            cache["P1"], cache["P2"] = P1, P2
    m = len(owner_ptr) - 1
    counts = np.diff(owner_ptr)
    owner = np.repeat(np.arange(m), counts)
    R = sp.csr_matrix((weight, (owner, np.arange(len(weight)))), shape=(m, len(weight)))
    X = F.shape[0]
    out = np.empty((X, m))
    chunk = max(1, int(2e7 // max(len(weight), 1)))
    same = F is G or np.shares_memory(F, G) and np.array_equal(F, G)
    for lo in range(0, X, chunk):
        hi = min(X, lo + chunk)
        f1 = P1 @ F[lo:hi].T
        f2 = P2 @ F[lo:hi].T
        if same:
            prod = 2.0 * f1 * f2
        else:
            g1 = P1 @ G[lo:hi].T
            g2 = P2 @ G[lo:hi].T
            prod = f1 * g2 + g1 * f2
        out[lo:hi] = (R @ prod).T
    return out
