# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled pitch kernels. Signatures mirror ``_kernels_py``."""
import numpy as np
cimport numpy as cnp
from libc.math cimport sqrt, fabs

cnp.import_array()


def yin_cmnd(const double[::1] x, const long[::1] starts, long win, long tau_max):
    cdef Py_ssize_t n_frames = starts.shape[0]
    out_arr = np.empty((n_frames, tau_max + 1), dtype=np.float64)
    cdef double[:, ::1] out = out_arr
    cdef Py_ssize_t t, tau, j
    cdef long s
    cdef double acc, diff, running
    with nogil:
        for t in range(n_frames):
            s = starts[t]
            out[t, 0] = 1.0
            running = 0.0
            for tau in range(1, tau_max + 1):
                acc = 0.0
                for j in range(win):
                    diff = x[s + j] - x[s + j + tau]
                    acc = acc + diff * diff
                running = running + acc
                if running > 0.0:
                    out[t, tau] = acc * tau / running
                else:
                    out[t, tau] = 1.0
    return out_arr


def nccf(const double[::1] x, const long[::1] starts, long win, const long[:, ::1] lags):
    cdef Py_ssize_t n_frames = lags.shape[0]
    cdef Py_ssize_t n_lags = lags.shape[1]
    out_arr = np.zeros((n_frames, n_lags), dtype=np.float64)
    cdef double[:, ::1] out = out_arr
    cdef Py_ssize_t t, i, j
    cdef long s, k
    cdef double e0, ek, cross, denom
    with nogil:
        for t in range(n_frames):
            s = starts[t]
            e0 = 0.0
            for j in range(win):
                e0 = e0 + x[s + j] * x[s + j]
            for i in range(n_lags):
                k = lags[t, i]
                cross = 0.0
                ek = 0.0
                for j in range(win):
                    cross = cross + x[s + j] * x[s + j + k]
                    ek = ek + x[s + j + k] * x[s + j + k]
                denom = e0 * ek
                if denom > 0.0:
                    out[t, i] = cross / sqrt(denom)
    return out_arr


def viterbi(const double[:, ::1] local, const double[:, ::1] log_f0,
            const double[::1] flip_cost, double freq_weight):
    cdef Py_ssize_t T = local.shape[0]
    cdef Py_ssize_t S = local.shape[1]
    path_arr = np.zeros(T, dtype=np.int64)
    if T == 0:
        return path_arr
    back_arr = np.zeros((T, S), dtype=np.int64)
    cum_arr = np.empty(S, dtype=np.float64)
    nxt_arr = np.empty(S, dtype=np.float64)
    cdef long[:, ::1] back = back_arr
    cdef double[::1] cum = cum_arr
    cdef double[::1] nxt = nxt_arr
    cdef long[::1] path = path_arr
    cdef Py_ssize_t t, c, p, best_p
    cdef double best, cand, trans
    with nogil:
        for c in range(S):
            cum[c] = local[0, c]
        for t in range(1, T):
            for c in range(S):
                best = 1e300
                best_p = 0
                for p in range(S):
                    if c == 0 and p == 0:
                        trans = 0.0
                    elif c == 0 or p == 0:
                        trans = flip_cost[t]
                    else:
                        trans = freq_weight * fabs(log_f0[t, c] - log_f0[t - 1, p])
                    cand = cum[p] + trans
                    if cand < best:
                        best = cand
                        best_p = p
                back[t, c] = best_p
                nxt[c] = best + local[t, c]
            for c in range(S):
                cum[c] = nxt[c]
        best = 1e300
        best_p = 0
        for c in range(S):
            if cum[c] < best:
                best = cum[c]
                best_p = c
        path[T - 1] = best_p
        for t in range(T - 1, 0, -1):
            path[t - 1] = back[t, path[t]]
    return path_arr
