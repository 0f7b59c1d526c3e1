# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled enumeration kernels; see ppcert._core_py for the reference."""

import numpy as np
cimport numpy as cnp
from libc.math cimport log, INFINITY

cnp.import_array()


def pdp_violation_mass(const double[:, :] kernel, const long[:, :] pairs, double exp_eps, double rtol):
    cdef Py_ssize_t p, t, x, y
    cdef Py_ssize_t n_pairs = pairs.shape[0], n_out = kernel.shape[1]
    cdef double acc, a, b
    out = np.zeros(n_pairs)
    cdef double[:] res = out
    for p in range(n_pairs):
        x = pairs[p, 0]
        y = pairs[p, 1]
        acc = 0.0
        for t in range(n_out):
            a = kernel[x, t]
            b = kernel[y, t]
            if a > 0.0 and a > exp_eps * b * (1.0 + rtol):
                acc += a
        res[p] = acc
    return out


def two_point_tails(const double[:, :] kernel, const long[:, :] pairs, const double[:] ws, double kappa, double tol):
    cdef Py_ssize_t p, t, x, y, i
    cdef Py_ssize_t n_pairs = pairs.shape[0], n_out = kernel.shape[1], n_w = ws.shape[0]
    cdef double acc, a, b, w, post, delta
    out = np.zeros((n_pairs, n_w))
    cdef double[:, :] res = out
    for p in range(n_pairs):
        x = pairs[p, 0]
        y = pairs[p, 1]
        for i in range(n_w):
            w = ws[i]
            acc = 0.0
            for t in range(n_out):
                a = kernel[x, t]
                if a <= 0.0:
                    continue
                b = kernel[y, t]
                post = w * a / (w * a + (1.0 - w) * b)
                delta = log(post) - log(w)
                if delta <= kappa + tol:
                    acc += a
            res[p, i] = acc
    return out


def two_point_limit_tails(const double[:, :] kernel, const long[:, :] pairs, double kappa, double tol):
    cdef Py_ssize_t p, t, x, y
    cdef Py_ssize_t n_pairs = pairs.shape[0], n_out = kernel.shape[1]
    cdef double acc, a, b, delta
    out = np.zeros(n_pairs)
    cdef double[:] res = out
    for p in range(n_pairs):
        x = pairs[p, 0]
        y = pairs[p, 1]
        acc = 0.0
        for t in range(n_out):
            a = kernel[x, t]
            if a <= 0.0:
                continue
            b = kernel[y, t]
            if b > 0.0:
                delta = log(a) - log(b)
            else:
                delta = INFINITY
            if delta <= kappa + tol:
                acc += a
        res[p] = acc
    return out


def average_gaussian_deltas(const double[:, :] mean, const double[:, :, :] cov, const double[:] x):
    cdef Py_ssize_t B = mean.shape[0], n = mean.shape[1]
    cdef Py_ssize_t b, i, j
    cdef double xbar = 0.0, mubar, vbar, innov, var, pvar, pmean, d0, d1
    for i in range(n):
        xbar += x[i]
    xbar /= n
    out = np.empty((B, n))
    cdef double[:, :] res = out
    su_arr = np.empty(n)
    cdef double[:] su = su_arr
    for b in range(B):
        mubar = 0.0
        vbar = 0.0
        for i in range(n):
            mubar += mean[b, i]
            su[i] = 0.0
            for j in range(n):
                su[i] += cov[b, i, j]
            su[i] /= n
            vbar += su[i]
        mubar /= n
        vbar /= n
        innov = xbar - mubar
        for i in range(n):
            var = cov[b, i, i]
            pmean = mean[b, i] + su[i] * innov / vbar
            pvar = var - su[i] * su[i] / vbar
            d0 = log(var) + (x[i] - mean[b, i]) * (x[i] - mean[b, i]) / var
            if pvar > 0.0:
                d1 = log(pvar) + (x[i] - pmean) * (x[i] - pmean) / pvar
                res[b, i] = d0 - d1
            else:
                res[b, i] = INFINITY
    return out


cdef double _pdp_delta(double[:, :] k, Py_ssize_t rows, Py_ssize_t cols, double exp_eps, double rtol) nogil:
    cdef Py_ssize_t x, y, t
    cdef double best = 0.0, acc, a
    for x in range(rows):
        for y in range(rows):
            if x == y:
                continue
            acc = 0.0
            for t in range(cols):
                a = k[x, t]
                if a > 0.0 and a > exp_eps * k[y, t] * (1.0 + rtol):
                    acc += a
            if acc > best:
                best = acc
    return best


def batch_chain_pdp(const double[:, :, :] ms, const double[:, :, :] ks, double exp_eps, double rtol):
    """Attained delta of M and of chain(M, K) under the complete relation."""
    cdef Py_ssize_t B = ms.shape[0], u = ms.shape[1], a = ms.shape[2], c = ks.shape[2]
    cdef Py_ssize_t b, x, t, s
    out = np.empty((B, 2))
    cdef double[:, :] res = out
    m_arr = np.empty((u, a))
    mk_arr = np.empty((u, c))
    cdef double[:, :] m = m_arr
    cdef double[:, :] mk = mk_arr
    for b in range(B):
        for x in range(u):
            for t in range(a):
                m[x, t] = ms[b, x, t]
            for s in range(c):
                mk[x, s] = 0.0
                for t in range(a):
                    mk[x, s] += ms[b, x, t] * ks[b, t, s]
        res[b, 0] = _pdp_delta(m, u, a, exp_eps, rtol)
        res[b, 1] = _pdp_delta(mk, u, c, exp_eps, rtol)
    return out
