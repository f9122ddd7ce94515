# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled masked structural-equation kernels.

Same contract as ``fallback``; iterates only over the history entries of each
transition instead of materialising dense (B, d, d) masks.
"""
import numpy as np
cimport numpy as cnp

cnp.import_array()


def mlp_forward(const cnp.int64_t[:, ::1] hist, const double[:, :, ::1] mask,
                const double[:, :, ::1] w1, const double[:, ::1] b1,
                const double[:, ::1] w2, const double[::1] b2, double slope):
    cdef Py_ssize_t B = hist.shape[0], L = hist.shape[1]
    cdef Py_ssize_t d = w1.shape[0], H = w1.shape[2]
    cdef Py_ssize_t b, k, m, h, i
    cdef double a, p, zz
    z_arr = np.empty((B, d), dtype=np.float64)
    pre_arr = np.empty((B, d, H), dtype=np.float64)
    cdef double[:, ::1] z = z_arr
    cdef double[:, :, ::1] pre = pre_arr
    with nogil:
        for b in range(B):
            for k in range(d):
                for h in range(H):
                    pre[b, k, h] = b1[k, h]
                for m in range(L):
                    a = mask[b, k, m]
                    if a != 0.0:
                        i = hist[b, m]
                        for h in range(H):
                            pre[b, k, h] += a * w1[k, i, h]
                zz = b2[k]
                for h in range(H):
                    p = pre[b, k, h]
                    if p > 0:
                        zz += w2[k, h] * p
                    else:
                        zz += w2[k, h] * slope * p
                z[b, k] = zz
    return z_arr, pre_arr


def mlp_backward(const cnp.int64_t[:, ::1] hist, const double[:, :, ::1] mask,
                 const double[:, :, ::1] w1, const double[:, ::1] w2,
                 const double[:, :, ::1] pre, const double[:, ::1] dz, double slope):
    cdef Py_ssize_t B = hist.shape[0], L = hist.shape[1]
    cdef Py_ssize_t d = w1.shape[0], H = w1.shape[2]
    cdef Py_ssize_t b, k, m, h, i
    cdef double g, p, a, s, dp
    dw1_arr = np.zeros((d, d, H), dtype=np.float64)
    db1_arr = np.zeros((d, H), dtype=np.float64)
    dw2_arr = np.zeros((d, H), dtype=np.float64)
    db2_arr = np.zeros(d, dtype=np.float64)
    dmask_arr = np.empty((B, d, L), dtype=np.float64)
    dpre_arr = np.empty(H, dtype=np.float64)
    cdef double[:, :, ::1] dw1 = dw1_arr
    cdef double[:, ::1] db1 = db1_arr
    cdef double[:, ::1] dw2 = dw2_arr
    cdef double[::1] db2 = db2_arr
    cdef double[:, :, ::1] dmask = dmask_arr
    cdef double[::1] dpre = dpre_arr
    with nogil:
        for b in range(B):
            for k in range(d):
                g = dz[b, k]
                db2[k] += g
                for h in range(H):
                    p = pre[b, k, h]
                    if p > 0:
                        dw2[k, h] += g * p
                        dp = g * w2[k, h]
                    else:
                        dw2[k, h] += g * slope * p
                        dp = g * w2[k, h] * slope
                    dpre[h] = dp
                    db1[k, h] += dp
                for m in range(L):
                    i = hist[b, m]
                    a = mask[b, k, m]
                    s = 0.0
                    for h in range(H):
                        s += w1[k, i, h] * dpre[h]
                    dmask[b, k, m] = s
                    if a != 0.0:
                        for h in range(H):
                            dw1[k, i, h] += a * dpre[h]
    return dw1_arr, db1_arr, dw2_arr, db2_arr, dmask_arr


def linear_forward(const cnp.int64_t[:, ::1] hist, const double[:, :, ::1] mask,
                   const double[:, ::1] w, const double[::1] bias):
    cdef Py_ssize_t B = hist.shape[0], L = hist.shape[1], d = w.shape[0]
    cdef Py_ssize_t b, k, m
    cdef double zz
    z_arr = np.empty((B, d), dtype=np.float64)
    cdef double[:, ::1] z = z_arr
    with nogil:
        for b in range(B):
            for k in range(d):
                zz = bias[k]
                for m in range(L):
                    zz += mask[b, k, m] * w[k, hist[b, m]]
                z[b, k] = zz
    return z_arr


def linear_backward(const cnp.int64_t[:, ::1] hist, const double[:, :, ::1] mask,
                    const double[:, ::1] w, const double[:, ::1] dz):
    cdef Py_ssize_t B = hist.shape[0], L = hist.shape[1], d = w.shape[0]
    cdef Py_ssize_t b, k, m, i
    cdef double g
    dw_arr = np.zeros((d, d), dtype=np.float64)
    db_arr = np.zeros(d, dtype=np.float64)
    dmask_arr = np.empty((B, d, L), dtype=np.float64)
    cdef double[:, ::1] dw = dw_arr
    cdef double[::1] db = db_arr
    cdef double[:, :, ::1] dmask = dmask_arr
    with nogil:
        for b in range(B):
            for k in range(d):
                g = dz[b, k]
                db[k] += g
                for m in range(L):
                    i = hist[b, m]
                    dw[k, i] += g * mask[b, k, m]
                    dmask[b, k, m] = g * w[k, i]
    return dw_arr, db_arr, dmask_arr
