# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled propagation kernels.

Mirrors ``nsdiff._kernels._ref`` operation-for-operation; evaluation order of
every floating-point expression matches the reference (the extension is
built with -ffp-contract=off), so the linear-model kernels are bit-identical
to the fallback and the log-evaluating Lotka-Volterra kernels agree to
floating-point rounding.
"""

from libc.math cimport INFINITY, log

import numpy as np

BACKEND_NAME = "compiled"


def ou_bridge(double[:, ::1] A, double[:, ::1] a, double[:, ::1] sig,
              double[:, ::1] B, double[:, :, ::1] M, double[:, :, ::1] Sinv,
              double[:, ::1] x0, double[:, ::1] x1, double[:, :, ::1] dW,
              double dt, paths_out=None):
    cdef Py_ssize_t N = x0.shape[0]
    cdef Py_ssize_t K = dW.shape[1]
    out = np.zeros(N)
    cdef double[::1] lsum = out
    cdef double[:, :, ::1] paths
    cdef bint want_paths = paths_out is not None
    if want_paths:
        paths = paths_out
    cdef Py_ssize_t i, j
    cdef double xa, xb, d0, d1, t0, t1, g0, g1, m0, m1, n0, n1, f0, f1, s
    for i in range(N):
        xa = x0[i, 0]
        xb = x0[i, 1]
        s = 0.0
        if want_paths:
            paths[i, 0, 0] = xa
            paths[i, 0, 1] = xb
            paths[i, K, 0] = x1[i, 0]
            paths[i, K, 1] = x1[i, 1]
        for j in range(K):
            d0 = x1[i, 0] - (M[j, 0, 0] * xa + M[j, 0, 1] * xb)
            d1 = x1[i, 1] - (M[j, 1, 0] * xa + M[j, 1, 1] * xb)
            t0 = Sinv[j, 0, 0] * d0 + Sinv[j, 0, 1] * d1
            t1 = Sinv[j, 1, 0] * d0 + Sinv[j, 1, 1] * d1
            g0 = M[j, 0, 0] * t0 + M[j, 1, 0] * t1
            g1 = M[j, 0, 1] * t0 + M[j, 1, 1] * t1
            m0 = -(A[0, 0] * xa + A[0, 1] * xb)
            m1 = -(A[1, 0] * xa + A[1, 1] * xb)
            n0 = B[0, 0] * xa + B[0, 1] * xb
            n1 = B[1, 0] * xa + B[1, 1] * xb
            s = s + ((m0 - n0) * g0 + (m1 - n1) * g1) * dt
            if j < K - 1:
                f0 = m0 + (a[0, 0] * g0 + a[0, 1] * g1)
                f1 = m1 + (a[1, 0] * g0 + a[1, 1] * g1)
                xa = xa + f0 * dt + (sig[0, 0] * dW[i, j, 0] + sig[0, 1] * dW[i, j, 1])
                xb = xb + f1 * dt + (sig[1, 0] * dW[i, j, 0] + sig[1, 1] * dW[i, j, 1])
                if want_paths:
                    paths[i, j + 1, 0] = xa
                    paths[i, j + 1, 1] = xb
        lsum[i] = s
    return out


def lv_bridge(double alpha, double beta, double gamma, double zeta,
              double s1, double s2, bint literal,
              double[::1] r10, double[::1] r11, double[::1] r20, double[::1] r21,
              double[:, ::1] x0, double[:, ::1] x1, double[:, :, ::1] dW,
              double dt, double h, paths_out=None):
    cdef Py_ssize_t N = x0.shape[0]
    cdef Py_ssize_t K = dW.shape[1]
    cdef double s1sq = s1 * s1
    cdef double s2sq = s2 * s2
    out = np.zeros(N)
    alive_out = np.ones(N, dtype=np.uint8)
    cdef double[::1] lsum = out
    cdef unsigned char[::1] alive = alive_out
    cdef double[:, :, ::1] paths
    cdef bint want_paths = paths_out is not None
    if want_paths:
        paths = paths_out
    cdef Py_ssize_t i, j, jstop
    cdef double xa, xb, ea, eb, log_ea, log_eb, tau, u, c1, c2, i1, i2
    cdef double m1, m2, g1, g2, mu1, mu2, n1, n2, ell, h22, a11, a22
    cdef double f1, f2, d1, d2, na, nb, s, jd
    cdef bint ok
    for i in range(N):
        xa = x0[i, 0]
        xb = x0[i, 1]
        ea = x1[i, 0]
        eb = x1[i, 1]
        log_ea = log(ea)
        log_eb = log(eb)
        s = 0.0
        ok = xa > 0.0 and xb > 0.0
        jstop = 0
        if want_paths:
            paths[i, 0, 0] = xa
            paths[i, 0, 1] = xb
            paths[i, K, 0] = ea
            paths[i, K, 1] = eb
        if ok:
            for j in range(K):
                jd = j * dt
                tau = h - jd
                u = jd / h
                c1 = r10[i] * (1.0 - u) + r11[i] * u
                c2 = r20[i] * (1.0 - u) + r21[i] * u
                i1 = tau * (c1 + r11[i]) * 0.5
                i2 = tau * (c2 + r21[i]) * 0.5
                m1 = log_ea - log(xa) - i1 + s1sq * tau * 0.5
                m2 = log_eb - log(xb) - i2 + s2sq * tau * 0.5
                g1 = m1 / (xa * s1sq * tau)
                g2 = m2 / (xb * s2sq * tau)
                mu1 = xa * (alpha - beta * xb)
                mu2 = xb * (zeta * xa - gamma)
                n1 = xa * c1
                n2 = xb * c2
                ell = (mu1 - n1) * g1 + (mu2 - n2) * g2
                if literal:
                    h22 = -(1.0 + m2) / (xb * xb * s2sq * tau)
                    ell = ell - 0.5 * (s2sq * (xa * xa - xb * xb)) * (-h22 - g2 * g2)
                s = s + ell * dt
                if j < K - 1:
                    a11 = s1sq * xa * xa
                    a22 = s2sq * (xa * xa if literal else xb * xb)
                    f1 = mu1 + a11 * g1
                    f2 = mu2 + a22 * g2
                    d1 = s1 * xa
                    d2 = s2 * (xa if literal else xb)
                    na = xa + f1 * dt + d1 * dW[i, j, 0]
                    nb = xb + f2 * dt + d2 * dW[i, j, 1]
                    if na > 0.0 and nb > 0.0:
                        xa = na
                        xb = nb
                    else:
                        ok = False
                    if want_paths:
                        paths[i, j + 1, 0] = xa
                        paths[i, j + 1, 1] = xb
                    if not ok:
                        jstop = j + 1
                        break
        if ok:
            lsum[i] = s
        else:
            lsum[i] = -INFINITY
            alive[i] = 0
            if want_paths:
                # remaining interior grid points hold the frozen state
                for j in range(jstop + 1, K):
                    paths[i, j, 0] = xa
                    paths[i, j, 1] = xb
    return out, alive_out.view(bool)


def ou_euler(double[:, ::1] A, double[:, ::1] sig, double[:, ::1] x0,
             double[:, :, ::1] dW, double dt):
    cdef Py_ssize_t N = x0.shape[0]
    cdef Py_ssize_t K = dW.shape[1]
    out = np.empty((N, 2))
    cdef double[:, ::1] res = out
    cdef Py_ssize_t i, j
    cdef double xa, xb, m0, m1
    for i in range(N):
        xa = x0[i, 0]
        xb = x0[i, 1]
        for j in range(K):
            m0 = -(A[0, 0] * xa + A[0, 1] * xb)
            m1 = -(A[1, 0] * xa + A[1, 1] * xb)
            xa = xa + m0 * dt + (sig[0, 0] * dW[i, j, 0] + sig[0, 1] * dW[i, j, 1])
            xb = xb + m1 * dt + (sig[1, 0] * dW[i, j, 0] + sig[1, 1] * dW[i, j, 1])
        res[i, 0] = xa
        res[i, 1] = xb
    return out


def lv_euler(double alpha, double beta, double gamma, double zeta,
             double s1, double s2, bint literal,
             double[:, ::1] x0, double[:, :, ::1] dW, double dt):
    cdef Py_ssize_t N = x0.shape[0]
    cdef Py_ssize_t K = dW.shape[1]
    out = np.empty((N, 2))
    alive_out = np.ones(N, dtype=np.uint8)
    cdef double[:, ::1] res = out
    cdef unsigned char[::1] alive = alive_out
    cdef Py_ssize_t i, j
    cdef double xa, xb, mu1, mu2, d1, d2, na, nb
    cdef bint ok
    for i in range(N):
        xa = x0[i, 0]
        xb = x0[i, 1]
        ok = xa > 0.0 and xb > 0.0
        if ok:
            for j in range(K):
                mu1 = xa * (alpha - beta * xb)
                mu2 = xb * (zeta * xa - gamma)
                d1 = s1 * xa
                d2 = s2 * (xa if literal else xb)
                na = xa + mu1 * dt + d1 * dW[i, j, 0]
                nb = xb + mu2 * dt + d2 * dW[i, j, 1]
                if na > 0.0 and nb > 0.0:
                    xa = na
                    xb = nb
                else:
                    ok = False
                    break
        res[i, 0] = xa
        res[i, 1] = xb
        if not ok:
            alive[i] = 0
    return out, alive_out.view(bool)
