# Compiled kernels for the per-edge hot loops: scatter-add, segment max,
# and the fused relation edge-score forward/backward. Loops are sequential
# on purpose — results must be bitwise deterministic and must not depend on
# thread scheduling.

import numpy as np

cimport numpy as cnp

cnp.import_array()

KIND_DIFF = 1
KIND_ABSDIFF = 2
KIND_PROD = 3
KIND_ABSDIFF_PROD = 4


def scatter_add_rows(const double[:, ::1] src, const long long[::1] idx, Py_ssize_t n):
    cdef Py_ssize_t e = src.shape[0], d = src.shape[1]
    out_arr = np.zeros((n, d), dtype=np.float64)
    cdef double[:, ::1] out = out_arr
    cdef Py_ssize_t i, k, row
    for i in range(e):
        row = idx[i]
        for k in range(d):
            out[row, k] += src[i, k]
    return out_arr


def scatter_add_vec(const double[::1] src, const long long[::1] idx, Py_ssize_t n):
    cdef Py_ssize_t e = src.shape[0]
    out_arr = np.zeros(n, dtype=np.float64)
    cdef double[::1] out = out_arr
    cdef Py_ssize_t i
    for i in range(e):
        out[idx[i]] += src[i]
    return out_arr


def segment_max(const double[::1] values, const long long[::1] segments, Py_ssize_t n):
    cdef Py_ssize_t e = values.shape[0]
    out_arr = np.full(n, -np.inf, dtype=np.float64)
    cdef double[::1] out = out_arr
    cdef Py_ssize_t i, s
    for i in range(e):
        s = segments[i]
        if values[i] > out[s]:
            out[s] = values[i]
    return out_arr


def relation_scores_forward(const double[:, ::1] h, const long long[::1] src,
                            const long long[::1] dst, const double[::1] w, int kind):
    cdef Py_ssize_t e = src.shape[0], d = h.shape[1]
    scores_arr = np.empty(e, dtype=np.float64)
    cdef double[::1] scores = scores_arr
    cdef Py_ssize_t i, k, a, b
    cdef double acc, diff
    for i in range(e):
        a = dst[i]
        b = src[i]
        acc = 0.0
        if kind == 1:
            for k in range(d):
                acc += (h[a, k] - h[b, k]) * w[k]
        elif kind == 2:
            for k in range(d):
                diff = h[a, k] - h[b, k]
                acc += (diff if diff >= 0.0 else -diff) * w[k]
        elif kind == 3:
            for k in range(d):
                acc += h[a, k] * h[b, k] * w[k]
        else:
            for k in range(d):
                diff = h[a, k] - h[b, k]
                acc += (diff if diff >= 0.0 else -diff) * w[k]
                acc += h[a, k] * h[b, k] * w[d + k]
        scores[i] = acc
    return scores_arr


def relation_scores_backward(const double[:, ::1] h, const long long[::1] src,
                             const long long[::1] dst, const double[::1] w, int kind,
                             const double[::1] grad_scores):
    cdef Py_ssize_t e = src.shape[0], d = h.shape[1]
    grad_h_arr = np.zeros((h.shape[0], d), dtype=np.float64)
    grad_w_arr = np.zeros(w.shape[0], dtype=np.float64)
    cdef double[:, ::1] grad_h = grad_h_arr
    cdef double[::1] grad_w = grad_w_arr
    cdef Py_ssize_t i, k, a, b
    cdef double g, diff, sgn, signed
    for i in range(e):
        a = dst[i]
        b = src[i]
        g = grad_scores[i]
        if kind == 1:
            for k in range(d):
                grad_h[a, k] += g * w[k]
                grad_h[b, k] -= g * w[k]
                grad_w[k] += g * (h[a, k] - h[b, k])
        elif kind == 2:
            for k in range(d):
                diff = h[a, k] - h[b, k]
                sgn = 1.0 if diff > 0.0 else (-1.0 if diff < 0.0 else 0.0)
                signed = g * sgn * w[k]
                grad_h[a, k] += signed
                grad_h[b, k] -= signed
                grad_w[k] += g * (diff if diff >= 0.0 else -diff)
        elif kind == 3:
            for k in range(d):
                grad_h[a, k] += g * w[k] * h[b, k]
                grad_h[b, k] += g * w[k] * h[a, k]
                grad_w[k] += g * h[a, k] * h[b, k]
        else:
            for k in range(d):
                diff = h[a, k] - h[b, k]
                sgn = 1.0 if diff > 0.0 else (-1.0 if diff < 0.0 else 0.0)
                signed = g * sgn * w[k]
                grad_h[a, k] += signed + g * w[d + k] * h[b, k]
                grad_h[b, k] += -signed + g * w[d + k] * h[a, k]
                grad_w[k] += g * (diff if diff >= 0.0 else -diff)
                grad_w[d + k] += g * h[a, k] * h[b, k]
    return grad_h_arr, grad_w_arr
