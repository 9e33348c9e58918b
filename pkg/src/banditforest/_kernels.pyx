# cython: language_level=3
"""Compiled histogram kernels.

Each function mirrors one in ``_fallback`` exactly; see that module for the
array contracts. Both backends accumulate in the same order, so their
outputs are bit-identical.
"""

from libc.math cimport floor

import numpy as np

cimport numpy as cnp

cnp.import_array()

ctypedef cnp.int64_t i64


def bin_batch(const double[::1, :] X, const i64[:] rows, const i64[:] feats,
              const double[:] lo, const double[:] width,
              const double[:, :] edges, const i64[:] n_edges,
              const unsigned char[:] equal_width, i64[:, :] out):
    cdef Py_ssize_t i, j, b = rows.shape[0], m = feats.shape[0]
    cdef Py_ssize_t col, T, idx, lo_i, hi_i, mid
    cdef double v, base, w, q
    for i in range(m):
        col = feats[i]
        T = n_edges[i]
        base = lo[i]
        w = width[i]
        if equal_width[i]:
            for j in range(b):
                v = X[rows[j], col]
                q = floor((v - base) / w) if w > 0 else 0.0
                if q < 0:
                    idx = 0
                elif q > T:
                    idx = T
                else:
                    idx = <Py_ssize_t>q
                # floating-point correction against the stored edges
                while idx < T and v >= edges[i, idx]:
                    idx += 1
                while idx > 0 and v < edges[i, idx - 1]:
                    idx -= 1
                out[i, j] = idx
        else:
            for j in range(b):
                v = X[rows[j], col]
                lo_i = 0
                hi_i = T
                while lo_i < hi_i:
                    mid = (lo_i + hi_i) >> 1
                    if edges[i, mid] <= v:
                        lo_i = mid + 1
                    else:
                        hi_i = mid
                out[i, j] = lo_i


def add_class_counts(const i64[:, :] bins, const i64[:] y, const i64[:] slots,
                     i64[:, :, :] counts):
    cdef Py_ssize_t i, j, s, m = bins.shape[0], b = bins.shape[1]
    for i in range(m):
        s = slots[i]
        for j in range(b):
            counts[s, bins[i, j], y[j]] += 1


def add_moments(const i64[:, :] bins, const double[:] y, const i64[:] slots,
                double[:, :, :] moments):
    cdef Py_ssize_t i, j, s, c, m = bins.shape[0], b = bins.shape[1]
    cdef double v, v2
    for i in range(m):
        s = slots[i]
        for j in range(b):
            c = bins[i, j]
            v = y[j]
            v2 = v * v
            moments[s, c, 0] += 1.0
            moments[s, c, 1] += v
            moments[s, c, 2] += v2
            moments[s, c, 3] += v2 * v
            moments[s, c, 4] += v2 * v2


def fisher_yates_prefix(i64[:] perm, Py_ssize_t start, Py_ssize_t stop,
                        const i64[:] draws):
    cdef Py_ssize_t i, j
    cdef i64 tmp
    for i in range(start, stop):
        j = draws[i - start]
        tmp = perm[i]
        perm[i] = perm[j]
        perm[j] = tmp
