# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled ensemble kernels: fixed-order reductions and the backward step.

Same contracts as ``_kernels_py``; loops are written so every reduction
runs in particle order, which keeps results independent of thread count.
"""

import numpy as np

cimport numpy as cnp

cnp.import_array()


def mean_and_cov(const double[:, ::1] Y):
    cdef Py_ssize_t N = Y.shape[0]
    cdef Py_ssize_t d = Y.shape[1]
    cdef cnp.ndarray[double, ndim=1] mean_arr = np.zeros(d)
    cdef cnp.ndarray[double, ndim=2] cov_arr = np.zeros((d, d))
    cdef double[::1] mean = mean_arr
    cdef double[:, ::1] cov = cov_arr
    cdef Py_ssize_t i, a, b
    cdef double acc, ya

    for i in range(N):
        for a in range(d):
            mean[a] += Y[i, a]
    for a in range(d):
        mean[a] /= N

    for i in range(N):
        for a in range(d):
            ya = Y[i, a] - mean[a]
            for b in range(a, d):
                cov[a, b] += ya * (Y[i, b] - mean[b])
    for a in range(d):
        for b in range(a, d):
            acc = cov[a, b] / (N - 1)
            cov[a, b] = acc
            cov[b, a] = acc
    return mean_arr, cov_arr


def cross_cov(const double[:, ::1] Y, const double[:, ::1] V):
    cdef Py_ssize_t N = Y.shape[0]
    cdef Py_ssize_t d = Y.shape[1]
    cdef Py_ssize_t q = V.shape[1]
    cdef cnp.ndarray[double, ndim=1] my_arr = np.zeros(d)
    cdef cnp.ndarray[double, ndim=1] mv_arr = np.zeros(q)
    cdef cnp.ndarray[double, ndim=2] out_arr = np.zeros((d, q))
    cdef double[::1] my = my_arr
    cdef double[::1] mv = mv_arr
    cdef double[:, ::1] out = out_arr
    cdef Py_ssize_t i, a, r
    cdef double ya

    for i in range(N):
        for a in range(d):
            my[a] += Y[i, a]
        for r in range(q):
            mv[r] += V[i, r]
    for a in range(d):
        my[a] /= N
    for r in range(q):
        mv[r] /= N

    for i in range(N):
        for a in range(d):
            ya = Y[i, a] - my[a]
            for r in range(q):
                out[a, r] += ya * (V[i, r] - mv[r])
    for a in range(d):
        for r in range(q):
            out[a, r] /= N - 1
    return out_arr


def linear_backward_step(const double[:, ::1] Y, const double[:, ::1] Eta,
                         const double[:, ::1] A, const double[:, ::1] B,
                         const double[:, ::1] C, const double[:, ::1] G,
                         const double[::1] cn, double dt):
    cdef Py_ssize_t N = Y.shape[0]
    cdef Py_ssize_t d = Y.shape[1]
    cdef Py_ssize_t m = Eta.shape[1]
    cdef Py_ssize_t q = C.shape[0]
    cdef cnp.ndarray[double, ndim=2] out_arr = np.empty((N, d))
    cdef double[:, ::1] out = out_arr
    cdef cnp.ndarray[double, ndim=1] w_arr = np.empty(q)
    cdef double[::1] w = w_arr
    cdef Py_ssize_t i, j, l, r
    cdef double drift, coup
    cdef double half_dt = 0.5 * dt

    for i in range(N):
        for r in range(q):
            coup = cn[r]
            for l in range(d):
                coup += C[r, l] * Y[i, l]
            w[r] = coup
        for j in range(d):
            drift = 0.0
            for l in range(d):
                drift += A[j, l] * Y[i, l]
            for l in range(m):
                drift += B[j, l] * Eta[i, l]
            coup = 0.0
            for r in range(q):
                coup += G[j, r] * w[r]
            out[i, j] = Y[i, j] - drift * dt - coup * half_dt
    return out_arr
