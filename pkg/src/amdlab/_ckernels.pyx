# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled hot kernels: fused bias+SiLU layers around BLAS products, Adam, Gaussian-mixture scores."""

import numpy as np
cimport numpy as cnp
from libc.math cimport exp, log, sqrt

cnp.import_array()

DEF ACT_SILU = 1


cdef inline double _sig(double z) noexcept nogil:
    cdef double e
    if z >= 0.0:
        return 1.0 / (1.0 + exp(-z))
    e = exp(z)
    return e / (1.0 + e)


def dense_forward(double[:, ::1] X, double[:, ::1] W, double[::1] b, int act):
    # the product goes to BLAS; the bias add and activation are fused in one pass
    Z_arr = np.matmul(np.asarray(X), np.asarray(W))
    cdef double[:, ::1] Z = Z_arr
    cdef Py_ssize_t B = Z.shape[0], m = Z.shape[1]
    cdef Py_ssize_t i, j
    cdef double z
    if act != ACT_SILU:
        for i in range(B):
            for j in range(m):
                Z[i, j] += b[j]
        return Z_arr, Z_arr
    H_arr = np.empty((B, m))
    cdef double[:, ::1] H = H_arr
    for i in range(B):
        for j in range(m):
            z = Z[i, j] + b[j]
            Z[i, j] = z
            H[i, j] = z * _sig(z)
    return Z_arr, H_arr


def dense_backward(double[:, ::1] X, double[:, ::1] W, double[:, ::1] Z,
                   double[:, ::1] G, int act):
    cdef Py_ssize_t B = Z.shape[0], m = Z.shape[1]
    cdef Py_ssize_t i, j
    cdef double s
    dZ_arr = np.empty((B, m))
    db_arr = np.zeros(m)
    cdef double[:, ::1] dZ = dZ_arr
    cdef double[::1] db = db_arr
    for i in range(B):
        for j in range(m):
            if act == ACT_SILU:
                s = _sig(Z[i, j])
                dZ[i, j] = G[i, j] * (s * (1.0 + Z[i, j] * (1.0 - s)))
            else:
                dZ[i, j] = G[i, j]
            db[j] += dZ[i, j]
    dX_arr = np.matmul(dZ_arr, np.asarray(W).T)
    dW_arr = np.matmul(np.asarray(X).T, dZ_arr)
    return dX_arr, dW_arr, db_arr


def adam_update(double[::1] p, double[::1] g, double[::1] m, double[::1] v,
                double lr, double beta1, double beta2, double eps,
                double bc1, double bc2):
    cdef Py_ssize_t i, n = p.shape[0]
    cdef double gi
    for i in range(n):
        gi = g[i]
        m[i] = beta1 * m[i] + (1.0 - beta1) * gi
        v[i] = beta2 * v[i] + (1.0 - beta2) * gi * gi
        p[i] -= lr * (m[i] / bc1) / (sqrt(v[i] / bc2) + eps)


def mixture_eval(double[:, ::1] X, double[:, ::1] means, double[:, :, ::1] precs,
                 double[::1] lognorm, double[::1] logw):
    cdef Py_ssize_t B = X.shape[0], M = means.shape[0]
    cdef Py_ssize_t i, k
    cdef double dx, dy, px, py, top, tot, w
    logp_arr = np.empty(B)
    score_arr = np.empty((B, 2))
    resp_arr = np.empty((B, M))
    pd_arr = np.empty((M, 2))
    cdef double[::1] logp = logp_arr
    cdef double[:, ::1] score = score_arr
    cdef double[:, ::1] resp = resp_arr
    cdef double[:, ::1] pd = pd_arr
    for i in range(B):
        top = -1e308
        for k in range(M):
            dx = X[i, 0] - means[k, 0]
            dy = X[i, 1] - means[k, 1]
            px = precs[k, 0, 0] * dx + precs[k, 0, 1] * dy
            py = precs[k, 1, 0] * dx + precs[k, 1, 1] * dy
            pd[k, 0] = px
            pd[k, 1] = py
            resp[i, k] = logw[k] + lognorm[k] - 0.5 * (dx * px + dy * py)
            if resp[i, k] > top:
                top = resp[i, k]
        tot = 0.0
        for k in range(M):
            resp[i, k] = exp(resp[i, k] - top)
            tot += resp[i, k]
        logp[i] = top + log(tot)
        score[i, 0] = 0.0
        score[i, 1] = 0.0
        for k in range(M):
            w = resp[i, k] / tot
            resp[i, k] = w
            score[i, 0] -= w * pd[k, 0]
            score[i, 1] -= w * pd[k, 1]
    return logp_arr, score_arr, resp_arr
