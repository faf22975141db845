# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled versions of the per-step kernels in ``_pykernels``.

Same signatures and layout conventions; loops are fused so no temporaries
are allocated for the small matrices a training step touches.
"""

import numpy as np
from libc.math cimport sqrt, fabs, pow


def delta_w(const double[:, ::1] A, const double[:, ::1] Bt, const double[::1] lam,
            double scale, double[:, ::1] out):
    cdef Py_ssize_t r = A.shape[0], n_in = A.shape[1], n_out = Bt.shape[1]
    cdef Py_ssize_t i, o, j
    cdef double c
    for o in range(n_out):
        for j in range(n_in):
            out[o, j] = 0.0
    for i in range(r):
        for o in range(n_out):
            c = scale * lam[i] * Bt[i, o]
            if c == 0.0:
                continue
            for j in range(n_in):
                out[o, j] += c * A[i, j]
    return np.asarray(out)


def triplet_grads(const double[:, ::1] G, const double[:, ::1] A, const double[:, ::1] Bt,
                  const double[::1] lam, double scale):
    cdef Py_ssize_t r = A.shape[0], n_in = A.shape[1], n_out = Bt.shape[1]
    gA_arr = np.zeros((r, n_in))
    gBt_arr = np.empty((r, n_out))
    glam_arr = np.empty(r)
    cdef double[:, ::1] gA = gA_arr
    cdef double[:, ::1] gBt = gBt_arr
    cdef double[::1] glam = glam_arr
    cdef Py_ssize_t i, o, j
    cdef double u, s, bl, acc
    for i in range(r):
        s = scale * lam[i]
        acc = 0.0
        for o in range(n_out):
            u = 0.0
            for j in range(n_in):
                u += G[o, j] * A[i, j]
            acc += Bt[i, o] * u
            gBt[i, o] = s * u
            bl = s * Bt[i, o]
            if bl != 0.0:
                for j in range(n_in):
                    gA[i, j] += bl * G[o, j]
        glam[i] = scale * acc
    return gA_arr, gBt_arr, glam_arr


cdef double _gram_side(const double[:, ::1] M, double[:, ::1] grad, double[:, ::1] P):
    cdef Py_ssize_t r = M.shape[0], d = M.shape[1]
    cdef Py_ssize_t i, k, j
    cdef double acc, loss = 0.0
    for i in range(r):
        for k in range(i, r):
            acc = 0.0
            for j in range(d):
                acc += M[i, j] * M[k, j]
            if i == k:
                acc -= 1.0
            P[i, k] = acc
            P[k, i] = acc
            loss += acc * acc if i == k else 2.0 * acc * acc
    for i in range(r):
        for j in range(d):
            grad[i, j] = 0.0
        for k in range(r):
            acc = 4.0 * P[i, k]
            if acc == 0.0:
                continue
            for j in range(d):
                grad[i, j] += acc * M[k, j]
    return loss


def gram_penalty(const double[:, ::1] A, const double[:, ::1] Bt):
    cdef Py_ssize_t r = A.shape[0]
    gA_arr = np.empty_like(np.asarray(A))
    gBt_arr = np.empty_like(np.asarray(Bt))
    P_arr = np.empty((r, r))
    cdef double loss = _gram_side(A, gA_arr, P_arr)
    loss += _gram_side(Bt, gBt_arr, P_arr)
    return loss, gA_arr, gBt_arr


def adamw_update(double[::1] p, const double[::1] g, double[::1] m, double[::1] v,
                 double lr, double beta1, double beta2, double eps, double weight_decay,
                 long step):
    cdef Py_ssize_t n = p.shape[0], i
    cdef double bc1 = 1.0 - pow(beta1, <double>step)
    cdef double bc2 = 1.0 - pow(beta2, <double>step)
    cdef double upd
    for i in range(n):
        m[i] = beta1 * m[i] + (1.0 - beta1) * g[i]
        v[i] = beta2 * v[i] + (1.0 - beta2) * (g[i] * g[i])
        upd = (m[i] / bc1) / (sqrt(v[i] / bc2) + eps)
        if weight_decay != 0.0:
            upd += weight_decay * p[i]
        p[i] -= lr * upd


def abs_mean_product(const double[:, ::1] X, const double[:, ::1] Y):
    cdef Py_ssize_t rows = X.shape[0], cols = X.shape[1], i, j
    cdef double acc = 0.0
    for i in range(rows):
        for j in range(cols):
            acc += fabs(X[i, j] * Y[i, j])
    return acc / (rows * cols)
