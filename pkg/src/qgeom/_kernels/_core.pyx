# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled hot kernels: fused quantize-and-reduce loops for the Monte-Carlo
harness, stochastic rounding and per-column extrema for Range BN.

Reductions sum plain over blocks of BLOCK elements and combine the block
sums with Neumaier compensation.
"""
import numpy as np
cimport numpy as cnp
from libc.math cimport fabs, floor

cnp.import_array()

cdef enum:
    BLOCK = 128


cdef inline void _acc(double v, double* s, double* c) noexcept nogil:
    cdef double t = s[0] + v
    if fabs(s[0]) >= fabs(v):
        c[0] += (s[0] - t) + v
    else:
        c[0] += (v - t) + s[0]
    s[0] = t


def fused_binary(const double[::1] w):
    cdef Py_ssize_t i, j, end, n = w.shape[0]
    cdef double sd = 0, cd = 0, sw = 0, cw = 0, bd, bw, v
    with nogil:
        i = 0
        while i < n:
            end = i + BLOCK if i + BLOCK < n else n
            bd = 0
            bw = 0
            for j in range(i, end):
                v = w[j]
                bd += fabs(v)
                bw += v * v
            _acc(bd, &sd, &cd)
            _acc(bw, &sw, &cw)
            i = end
    return sd + cd, sw + cw, <double>n


def fused_ternary(const double[::1] w, double t):
    cdef Py_ssize_t i, j, end, n = w.shape[0], kept = 0
    cdef double sd = 0, cd = 0, sw = 0, cw = 0, bd, bw, v, a
    with nogil:
        i = 0
        while i < n:
            end = i + BLOCK if i + BLOCK < n else n
            bd = 0
            bw = 0
            for j in range(i, end):
                v = w[j]
                a = fabs(v)
                if a > t:
                    bd += a
                    kept += 1
                bw += v * v
            _acc(bd, &sd, &cd)
            _acc(bw, &sw, &cw)
            i = end
    return sd + cd, sw + cw, <double>kept


def fused_midrise(const double[::1] w, double delta):
    cdef Py_ssize_t i, j, end, n = w.shape[0]
    cdef double sd = 0, cd = 0, sw = 0, cw = 0, sq = 0, cq = 0, bd, bw, bq, v, q
    with nogil:
        i = 0
        while i < n:
            end = i + BLOCK if i + BLOCK < n else n
            bd = 0
            bw = 0
            bq = 0
            for j in range(i, end):
                v = w[j]
                q = delta * (floor(v / delta) + 0.5)
                bd += v * q
                bw += v * v
                bq += q * q
            _acc(bd, &sd, &cd)
            _acc(bw, &sw, &cw)
            _acc(bq, &sq, &cq)
            i = end
    return sd + cd, sw + cw, sq + cq


def fused_dot(const double[::1] w, const double[::1] q):
    cdef Py_ssize_t i, j, end, n = w.shape[0]
    cdef double sd = 0, cd = 0, sw = 0, cw = 0, sq = 0, cq = 0, bd, bw, bq
    if q.shape[0] != n:
        raise ValueError("length mismatch")
    with nogil:
        i = 0
        while i < n:
            end = i + BLOCK if i + BLOCK < n else n
            bd = 0
            bw = 0
            bq = 0
            for j in range(i, end):
                bd += w[j] * q[j]
                bw += w[j] * w[j]
                bq += q[j] * q[j]
            _acc(bd, &sd, &cd)
            _acc(bw, &sw, &cw)
            _acc(bq, &sq, &cq)
            i = end
    return sd + cd, sw + cw, sq + cq


cdef void _sround(const double* x, const double* u, double* out, Py_ssize_t n,
                  double step) noexcept nogil:
    cdef Py_ssize_t i
    cdef double scaled, lo
    for i in range(n):
        scaled = x[i] / step
        lo = floor(scaled)
        # branchless "lo + (u < frac)": floor(u - frac) is -1 exactly when u < frac
        out[i] = (lo - floor(u[i] - (scaled - lo))) * step


def stochastic_round(const double[::1] x, double step, const double[::1] u):
    cdef Py_ssize_t n = x.shape[0]
    out_arr = np.empty(n, dtype=np.float64)
    cdef double[::1] out = out_arr
    if n:
        with nogil:
            _sround(&x[0], &u[0], &out[0], n, step)
    return out_arr


def stochastic_ternarize(const double[::1] g, double s, const double[::1] u):
    cdef Py_ssize_t i, n = g.shape[0]
    codes_arr = np.zeros(n, dtype=np.int8)
    cdef cnp.int8_t[::1] codes = codes_arr
    cdef double v, p
    with nogil:
        for i in range(n):
            v = g[i]
            p = fabs(v) / s
            if p > 1.0:
                p = 1.0
            codes[i] = <cnp.int8_t>(-floor(u[i] - p)) * ((v > 0) - (v < 0))
    return codes_arr


def column_extrema(const double[:, :] x):
    cdef Py_ssize_t i, j, n = x.shape[0], d = x.shape[1]
    amin_arr = np.zeros(d, dtype=np.int64)
    amax_arr = np.zeros(d, dtype=np.int64)
    cdef cnp.int64_t[::1] amin = amin_arr
    cdef cnp.int64_t[::1] amax = amax_arr
    cdef double lo, hi, v
    with nogil:
        for j in range(d):
            lo = x[0, j]
            hi = lo
            for i in range(1, n):
                v = x[i, j]
                if v < lo:
                    lo = v
                    amin[j] = i
                elif v > hi:
                    hi = v
                    amax[j] = i
    return amin_arr, amax_arr
