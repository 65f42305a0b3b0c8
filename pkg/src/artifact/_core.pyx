# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled kernels: characteristic recurrence, Grad-kernel blocks, Gamma gain gather."""

import numpy as np
cimport numpy as cnp
from cython.parallel cimport prange
from libc.math cimport exp, expm1, sqrt, fabs

cdef extern from "complex.h" nogil:
    double complex cexp(double complex)
    double cabs(double complex)

cnp.import_array()

ctypedef fused scalar_t:
    double
    double complex

cdef double _SMALL = 0.05


cdef inline void _phi_real(double mu, double* e2, double* e3) noexcept nogil:
    # series sum_k (-mu)^k / (k+2)! and (k+1) (-mu)^k / (k+2)! below the cancellation range
    cdef double em, t = 0.5, s2 = 0.0, s3 = 0.0
    cdef int k
    if fabs(mu) < _SMALL:
        for k in range(10):
            s2 += t
            s3 += (k + 1) * t
            t *= -mu / (k + 3)
        e2[0] = s2
        e3[0] = s3
    else:
        em = expm1(-mu)
        e2[0] = (mu + em) / (mu * mu)
        e3[0] = (-em - mu * (1.0 + em)) / (mu * mu)


cdef inline void _phi_cplx(double complex mu, double complex* e2, double complex* e3) noexcept nogil:
    cdef double complex em, t = 0.5, s2 = 0.0, s3 = 0.0
    cdef int k
    if cabs(mu) < _SMALL:
        for k in range(10):
            s2 += t
            s3 += (k + 1) * t
            t *= -mu / (k + 3)
        e2[0] = s2
        e3[0] = s3
    else:
        em = cexp(-mu)
        e2[0] = (mu - 1.0 + em) / (mu * mu)
        e3[0] = (1.0 - (1.0 + mu) * em) / (mu * mu)


def phi_weights(mu):
    from ._core_py import phi_weights as pw
    return pw(mu)


def _sweep_real(const double[::1] lam, const double[::1] x, const double[:, ::1] s, const double[::1] c0,
                double kappa, bint forward):
    cdef Py_ssize_t J = x.shape[0] - 1, K = lam.shape[0], j, k
    out = np.empty((J + 1, K))
    cdef double[:, ::1] c = out
    cdef double h, a, b, e2, e3, eb
    with nogil:
        if forward:
            for k in range(K):
                c[0, k] = c0[k]
            for j in range(J):
                h = x[j + 1] - x[j]
                b = kappa * h
                eb = exp(-b)
                for k in range(K):
                    a = lam[k] * h
                    _phi_real(a - b, &e2, &e3)
                    c[j + 1, k] = exp(-a) * c[j, k] + h * (eb * e3 * s[j, k] + e2 * s[j + 1, k])
        else:
            for k in range(K):
                c[J, k] = c0[k]
            for j in range(J - 1, -1, -1):
                h = x[j + 1] - x[j]
                b = kappa * h
                eb = exp(b)
                for k in range(K):
                    a = lam[k] * h
                    _phi_real(b - a, &e2, &e3)
                    c[j, k] = exp(a) * c[j + 1, k] - h * (e2 * s[j, k] + eb * e3 * s[j + 1, k])
    return out


def _sweep_cplx(const double complex[::1] lam, const double[::1] x, const double complex[:, ::1] s,
                const double complex[::1] c0, double kappa, bint forward):
    cdef Py_ssize_t J = x.shape[0] - 1, K = lam.shape[0], j, k
    out = np.empty((J + 1, K), dtype=np.complex128)
    cdef double complex[:, ::1] c = out
    cdef double h, b, eb
    cdef double complex a, e2, e3
    with nogil:
        if forward:
            for k in range(K):
                c[0, k] = c0[k]
            for j in range(J):
                h = x[j + 1] - x[j]
                b = kappa * h
                eb = exp(-b)
                for k in range(K):
                    a = lam[k] * h
                    _phi_cplx(a - b, &e2, &e3)
                    c[j + 1, k] = cexp(-a) * c[j, k] + h * (eb * e3 * s[j, k] + e2 * s[j + 1, k])
        else:
            for k in range(K):
                c[J, k] = c0[k]
            for j in range(J - 1, -1, -1):
                h = x[j + 1] - x[j]
                b = kappa * h
                eb = exp(b)
                for k in range(K):
                    a = lam[k] * h
                    _phi_cplx(b - a, &e2, &e3)
                    c[j, k] = cexp(a) * c[j + 1, k] - h * (e2 * s[j, k] + eb * e3 * s[j + 1, k])
    return out


def exp_sweep(lam, x, s, c_start, kappa=0.0, forward=True):
    lam = np.asarray(lam)
    s = np.asarray(s)
    c_start = np.asarray(c_start)
    x = np.ascontiguousarray(x, dtype=np.float64)
    if np.iscomplexobj(lam) or np.iscomplexobj(s) or np.iscomplexobj(c_start):
        return _sweep_cplx(np.ascontiguousarray(lam, np.complex128), x,
                           np.ascontiguousarray(s, np.complex128),
                           np.array(np.broadcast_to(c_start, lam.shape), np.complex128),
                           float(kappa), bool(forward))
    return _sweep_real(np.ascontiguousarray(lam, np.float64), x,
                       np.ascontiguousarray(s, np.float64),
                       np.array(np.broadcast_to(c_start, lam.shape), np.float64),
                       float(kappa), bool(forward))


def kernel_block(rows, cols, double ck1, double ck2):
    cdef const double[:, ::1] r = np.ascontiguousarray(rows, dtype=np.float64)
    cdef const double[:, ::1] c = np.ascontiguousarray(cols, dtype=np.float64)
    cdef Py_ssize_t R = r.shape[0], N = c.shape[0], i, j
    out = np.empty((R, N))
    cdef double[:, ::1] o = out
    cdef double[::1] cn = np.einsum("jk,jk->j", np.asarray(c), np.asarray(c))
    cdef double a2, b2, d2, d, dx, dy, dz, q
    for i in prange(R, nogil=True, schedule="static"):
        a2 = r[i, 0] * r[i, 0] + r[i, 1] * r[i, 1] + r[i, 2] * r[i, 2]
        for j in range(N):
            dx = r[i, 0] - c[j, 0]
            dy = r[i, 1] - c[j, 1]
            dz = r[i, 2] - c[j, 2]
            d2 = dx * dx + dy * dy + dz * dz
            if d2 == 0.0:
                o[i, j] = 0.0
            else:
                b2 = cn[j]
                d = sqrt(d2)
                q = a2 - b2
                o[i, j] = ck1 * d * exp(-(a2 + b2) / 4.0) + ck2 * exp(-d2 / 8.0 - q * q / (8.0 * d2)) / d
    return out


cdef inline double _tri(const double[:, ::1] F, Py_ssize_t xrow, long base,
                        double t1, double t2, double t3, long s1, long s2) noexcept nogil:
    cdef double u1 = 1.0 - t1, u2 = 1.0 - t2, u3 = 1.0 - t3
    return (u1 * (u2 * (u3 * F[xrow, base] + t3 * F[xrow, base + 1])
                  + t2 * (u3 * F[xrow, base + s2] + t3 * F[xrow, base + s2 + 1]))
            + t1 * (u2 * (u3 * F[xrow, base + s1] + t3 * F[xrow, base + s1 + 1])
                    + t2 * (u3 * F[xrow, base + s1 + s2] + t3 * F[xrow, base + s1 + s2 + 1])))


def gamma_gain(F, G, base1, frac1, base2, frac2, weight, owner_ptr, shape, int threads=1, cache=None):
    cdef const double[:, ::1] Fv = np.ascontiguousarray(F, dtype=np.float64)
    cdef const double[:, ::1] Gv = np.ascontiguousarray(G, dtype=np.float64)
    cdef const long[::1] b1 = np.ascontiguousarray(base1, dtype=np.int64)
    cdef const long[::1] b2 = np.ascontiguousarray(base2, dtype=np.int64)
    cdef const double[:, ::1] t1 = np.ascontiguousarray(frac1, dtype=np.float64)
    cdef const double[:, ::1] t2 = np.ascontiguousarray(frac2, dtype=np.float64)
    cdef const double[::1] w = np.ascontiguousarray(weight, dtype=np.float64)
    cdef const long[::1] ptr = np.ascontiguousarray(owner_ptr, dtype=np.int64)
    cdef long s2 = shape[2]
    cdef long s1 = shape[1] * shape[2]
    cdef Py_ssize_t X = Fv.shape[0], M = ptr.shape[0] - 1, xr, i, s
    cdef bint same = np.shares_memory(np.asarray(F), np.asarray(G)) and np.array_equal(F, G)
    out = np.zeros((X, M))
    cdef double[:, ::1] o = out
    cdef double acc, f1, f2, g1, g2
    if threads < 1:
        threads = 1
    for xr in prange(X, nogil=True, schedule="static", num_threads=threads):
        for i in range(M):
            acc = 0.0
            for s in range(ptr[i], ptr[i + 1]):
                if b1[s] < 0 or b2[s] < 0:
                    continue
                f1 = _tri(Fv, xr, b1[s], t1[s, 0], t1[s, 1], t1[s, 2], s1, s2)
                f2 = _tri(Fv, xr, b2[s], t2[s, 0], t2[s, 1], t2[s, 2], s1, s2)
                if same:
                    acc = acc + w[s] * 2.0 * f1 * f2
                else:
                    g1 = _tri(Gv, xr, b1[s], t1[s, 0], t1[s, 1], t1[s, 2], s1, s2)
                    g2 = _tri(Gv, xr, b2[s], t2[s, 0], t2[s, 1], t2[s, 2], s1, s2)
                    acc = acc + w[s] * (f1 * g2 + g1 * f2)
            o[xr, i] = acc
    return out
