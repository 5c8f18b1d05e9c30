# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled excursion-scan kernel.

Contract and scan semantics are documented in ``_python.py``; the two
implementations must emit bit-identical rows from the same uniform stream.
"""
import numpy as np

cimport numpy as cnp


cdef inline Py_ssize_t _bisect_right(const double* cum, Py_ssize_t n, double u) nogil:
    cdef Py_ssize_t lo = 0, hi = n, mid
    while lo < hi:
        mid = (lo + hi) >> 1
        if u < cum[mid]:
            hi = mid
        else:
            lo = mid + 1
    return lo


def consume_excursions(double[::1] cum, int k, double[::1] uniforms,
                       long long[:, ::1] out, long long[::1] carry):
    cdef Py_ssize_t n = uniforms.shape[0]
    cdef Py_ssize_t nstates = cum.shape[0]
    cdef long long kk = 1 << k
    cdef long long maskk = kk - 1
    cdef long long hsize = kk * kk - kk
    cdef Py_ssize_t dm1 = 2 + 3 * hsize  # carry length
    cdef long long cur = carry[0]
    cdef long long steps = carry[1]
    cdef long long nxt, y, z
    cdef int v
    cdef int shifts[3]
    shifts[0] = 2 * k
    shifts[1] = k
    shifts[2] = 0
    cdef Py_ssize_t i, j, n_emit = 0
    cdef long long[::1] acc = carry[2:]

    with nogil:
        for i in range(n):
            nxt = _bisect_right(&cum[0], nstates, uniforms[i])
            if cur == 0 and nxt == 0:
                out[n_emit, 0] = steps
                for j in range(dm1 - 2):
                    out[n_emit, 1 + j] = acc[j]
                    acc[j] = 0
                steps = 0
                n_emit += 1
            for v in range(3):
                y = (cur >> shifts[v]) & maskk
                z = (nxt >> shifts[v]) & maskk
                if y != maskk:
                    acc[v * hsize + y * kk + z] += 1
            steps += 1
            cur = nxt

    carry[0] = cur
    carry[1] = steps
    return n_emit
