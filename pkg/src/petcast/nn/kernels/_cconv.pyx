# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled convolution and pooling kernels (single document).

Must stay semantically identical to pyconv: valid convolution, ReLU,
first-max pooling, gradients only through positive pooled activations.
"""

import numpy as np

cimport numpy as cnp

cnp.import_array()


def conv_forward(double[:, ::1] emb, double[:, ::1] weights, double[::1] bias):
    cdef Py_ssize_t t = emb.shape[0]
    cdef Py_ssize_t d = emb.shape[1]
    cdef Py_ssize_t n_f = weights.shape[0]
    cdef Py_ssize_t wd = weights.shape[1]
    cdef Py_ssize_t w = wd // d
    if w * d != wd:
        raise ValueError(f"filter width {wd} not a multiple of embedding dim {d}")
    cdef Py_ssize_t n_pos = t - w + 1
    if n_pos < 1:
        raise ValueError(f"document of {t} tokens shorter than window {w}")

    pooled_arr = np.zeros(n_f, dtype=np.float64)
    argmax_arr = np.zeros(n_f, dtype=np.int64)
    cdef double[::1] pooled = pooled_arr
    cdef long long[::1] argmax = argmax_arr

    cdef Py_ssize_t j, p, k, m, off, best_p
    cdef double z, best
    for j in range(n_f):
        best = -1e308
        best_p = 0
        for p in range(n_pos):
            z = bias[j]
            for k in range(w):
                off = k * d
                for m in range(d):
                    z += weights[j, off + m] * emb[p + k, m]
            if z > best:
                best = z
                best_p = p
        if best > 0.0:
            pooled[j] = best
            argmax[j] = best_p
    return pooled_arr, argmax_arr


def conv_backward(
    double[:, ::1] emb,
    double[:, ::1] weights,
    double[::1] g,
    double[::1] pooled,
    long long[::1] argmax,
    double[:, ::1] d_emb,
    double[:, ::1] d_weights,
    double[::1] d_bias,
):
    cdef Py_ssize_t d = emb.shape[1]
    cdef Py_ssize_t n_f = weights.shape[0]
    cdef Py_ssize_t wd = weights.shape[1]
    cdef Py_ssize_t w = wd // d
    cdef Py_ssize_t j, p, k, m, off
    cdef double gj
    for j in range(n_f):
        if pooled[j] <= 0.0 or g[j] == 0.0:
            continue
        gj = g[j]
        p = argmax[j]
        d_bias[j] += gj
        for k in range(w):
            off = k * d
            for m in range(d):
                d_weights[j, off + m] += gj * emb[p + k, m]
                d_emb[p + k, m] += gj * weights[j, off + m]
