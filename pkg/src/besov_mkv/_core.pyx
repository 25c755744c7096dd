# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled particle hot loops: CIC deposit, periodic linear interpolation and
counter-based uniforms.  Results match the numpy fallback bit for bit."""
import numpy as np
cimport numpy as cnp
from libc.math cimport floor
from libc.stdint cimport uint64_t, int64_t

cnp.import_array()

NAME = "cython"

cdef uint64_t GOLDEN = 0x9E3779B97F4A7C15ULL


cdef inline uint64_t mix64(uint64_t z) noexcept nogil:
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL
    return z ^ (z >> 31)


cdef inline double to_unit(uint64_t u) noexcept nogil:
    return (<double>(u >> 11) + 0.5) * 1.1102230246251565e-16


def counter_uniforms(key, stream_ids, step, int n_lanes):
    cdef uint64_t k = <uint64_t>int(key)
    cdef cnp.uint64_t[::1] ids = np.ascontiguousarray(stream_ids, dtype=np.uint64)
    cdef Py_ssize_t n = ids.shape[0], i, j
    out = np.empty((n, n_lanes), dtype=np.float64)
    cdef double[:, ::1] o = out
    cdef uint64_t base = <uint64_t>int(step) * <uint64_t>n_lanes
    cdef uint64_t state
    cdef uint64_t[16] cmix
    if n_lanes > 16:
        raise ValueError("at most 16 lanes")
    for j in range(n_lanes):
        cmix[j] = mix64(base + <uint64_t>j + GOLDEN)
    with nogil:
        for i in range(n):
            state = mix64(k + ids[i] * GOLDEN)
            for j in range(n_lanes):
                o[i, j] = to_unit(mix64(state ^ cmix[j]))
    return out


cdef inline void cell(double x, double L, Py_ssize_t N, int64_t* j, double* fr) noexcept nogil:
    cdef double s = (x + L) * (N / (2.0 * L))
    cdef double fl = floor(s)
    fr[0] = s - fl
    cdef int64_t jj = (<int64_t>fl) % N
    if jj < 0:
        jj += N
    j[0] = jj


def cic_deposit_1d(x, double L, Py_ssize_t N):
    cdef double[::1] xs = np.ascontiguousarray(x, dtype=np.float64)
    acc = np.zeros((2, N), dtype=np.float64)
    cdef double[:, ::1] o = acc
    cdef Py_ssize_t n = xs.shape[0], p
    cdef int64_t j
    cdef double fr
    with nogil:
        # one buffer per corner, summed afterwards in the fallback's order
        for p in range(n):
            cell(xs[p], L, N, &j, &fr)
            o[0, j] += 1.0 - fr
            o[1, (j + 1) % N] += fr
    out = acc[0]
    out += acc[1]
    return out


def cic_deposit_2d(x, y, double L, Py_ssize_t N):
    cdef double[::1] xs = np.ascontiguousarray(x, dtype=np.float64)
    cdef double[::1] ys = np.ascontiguousarray(y, dtype=np.float64)
    acc = np.zeros((4, N, N), dtype=np.float64)
    cdef double[:, :, ::1] o = acc
    cdef Py_ssize_t n = xs.shape[0], p
    cdef int64_t i, j, i1, j1
    cdef double fx, fy
    with nogil:
        for p in range(n):
            cell(xs[p], L, N, &i, &fx)
            cell(ys[p], L, N, &j, &fy)
            i1 = (i + 1) % N
            j1 = (j + 1) % N
            o[0, i, j] += (1.0 - fx) * (1.0 - fy)
            o[1, i, j1] += (1.0 - fx) * fy
            o[2, i1, j] += fx * (1.0 - fy)
            o[3, i1, j1] += fx * fy
    out = acc[0]
    out += acc[1]
    out += acc[2]
    out += acc[3]
    return out


def interp_1d(field, x, double L):
    cdef double[::1] f = np.ascontiguousarray(field, dtype=np.float64)
    cdef double[::1] xs = np.ascontiguousarray(x, dtype=np.float64)
    cdef Py_ssize_t N = f.shape[0], n = xs.shape[0], p
    out = np.empty(n, dtype=np.float64)
    cdef double[::1] o = out
    cdef int64_t j
    cdef double fr
    with nogil:
        for p in range(n):
            cell(xs[p], L, N, &j, &fr)
            o[p] = f[j] * (1.0 - fr) + f[(j + 1) % N] * fr
    return out


def interp_2d(field, x, y, double L):
    cdef double[:, ::1] f = np.ascontiguousarray(field, dtype=np.float64)
    cdef double[::1] xs = np.ascontiguousarray(x, dtype=np.float64)
    cdef double[::1] ys = np.ascontiguousarray(y, dtype=np.float64)
    cdef Py_ssize_t N = f.shape[0], n = xs.shape[0], p
    out = np.empty(n, dtype=np.float64)
    cdef double[::1] o = out
    cdef int64_t i, j, i1, j1
    cdef double fx, fy, lo, hi
    with nogil:
        for p in range(n):
            cell(xs[p], L, N, &i, &fx)
            cell(ys[p], L, N, &j, &fy)
            i1 = (i + 1) % N
            j1 = (j + 1) % N
            lo = f[i, j] * (1.0 - fy) + f[i, j1] * fy
            hi = f[i1, j] * (1.0 - fy) + f[i1, j1] * fy
            o[p] = lo * (1.0 - fx) + hi * fx
    return out
