# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled LSTM recurrence and edit-distance kernels.

Same contracts as ``grfasr._pykernels``. Row-major ``(H, 4H)`` recurrent
weights are handed to BLAS as the column-major ``(4H, H)`` transpose.
"""

import numpy as np
cimport numpy as cnp
from libc.math cimport exp, tanh
from scipy.linalg.cython_blas cimport dgemv

cnp.import_array()


cdef inline double _sigmoid(double x) nogil:
    return 1.0 / (1.0 + exp(-x))


def lstm_forward(const double[:, ::1] xproj, const double[:, ::1] w_hh,
                 const double[::1] h0, const double[::1] c0):
    cdef Py_ssize_t T = xproj.shape[0]
    cdef int four_h = <int>xproj.shape[1]
    cdef int H = four_h // 4
    hs_arr = np.empty((T, H))
    cs_arr = np.empty((T, H))
    gates_arr = np.empty((T, four_h))
    a_arr = np.empty(four_h)
    hprev_arr = np.array(h0, dtype=np.float64)
    cdef double[:, ::1] hs = hs_arr
    cdef double[:, ::1] cs = cs_arr
    cdef double[:, ::1] gates = gates_arr
    cdef double[::1] a = a_arr
    cdef double[::1] hprev = hprev_arr
    cdef double cprev, c, i, f, g, o
    cdef Py_ssize_t t, k
    cdef char trans = b'N'
    cdef int inc = 1
    cdef double one = 1.0
    if T == 0:
        return hs_arr, cs_arr, gates_arr
    with nogil:
        for t in range(T):
            for k in range(four_h):
                a[k] = xproj[t, k]
            dgemv(&trans, &four_h, &H, &one, &w_hh[0, 0], &four_h,
                  &hprev[0], &inc, &one, &a[0], &inc)
            for k in range(H):
                i = _sigmoid(a[k])
                f = _sigmoid(a[H + k])
                g = tanh(a[2 * H + k])
                o = _sigmoid(a[3 * H + k])
                cprev = c0[k] if t == 0 else cs[t - 1, k]
                c = f * cprev + i * g
                cs[t, k] = c
                hs[t, k] = o * tanh(c)
                hprev[k] = hs[t, k]
                gates[t, k] = i
                gates[t, H + k] = f
                gates[t, 2 * H + k] = g
                gates[t, 3 * H + k] = o
    return hs_arr, cs_arr, gates_arr


def lstm_backward(const double[:, ::1] dhs, const double[:, ::1] gates,
                  const double[:, ::1] cs, const double[:, ::1] w_hh,
                  const double[::1] c0):
    cdef Py_ssize_t T = dhs.shape[0]
    cdef int H = <int>dhs.shape[1]
    cdef int four_h = 4 * H
    dx_arr = np.empty((T, four_h))
    dh_arr = np.zeros(H)
    dc_arr = np.zeros(H)
    cdef double[:, ::1] dx = dx_arr
    cdef double[::1] dh_next = dh_arr
    cdef double[::1] dc_next = dc_arr
    cdef double i, f, g, o, tc, dh, dc, cprev
    cdef Py_ssize_t t, k
    cdef char trans = b'T'
    cdef int inc = 1
    cdef double one = 1.0, zero = 0.0
    with nogil:
        for t in range(T - 1, -1, -1):
            for k in range(H):
                i = gates[t, k]
                f = gates[t, H + k]
                g = gates[t, 2 * H + k]
                o = gates[t, 3 * H + k]
                cprev = c0[k] if t == 0 else cs[t - 1, k]
                tc = tanh(cs[t, k])
                dh = dhs[t, k] + dh_next[k]
                dc = dc_next[k] + dh * o * (1.0 - tc * tc)
                dx[t, k] = dc * g * i * (1.0 - i)
                dx[t, H + k] = dc * cprev * f * (1.0 - f)
                dx[t, 2 * H + k] = dc * i * (1.0 - g * g)
                dx[t, 3 * H + k] = dh * tc * o * (1.0 - o)
                dc_next[k] = dc * f
            dgemv(&trans, &four_h, &H, &one, &w_hh[0, 0], &four_h,
                  &dx[t, 0], &inc, &zero, &dh_next[0], &inc)
    return dx_arr, dh_arr, dc_arr


def edit_distance(a, b):
    cdef cnp.int64_t[::1] x = np.ascontiguousarray(a, dtype=np.int64)
    cdef cnp.int64_t[::1] y = np.ascontiguousarray(b, dtype=np.int64)
    cdef Py_ssize_t n = y.shape[0], m = x.shape[0], i, j
    prev_arr = np.arange(n + 1, dtype=np.int64)
    cur_arr = np.empty(n + 1, dtype=np.int64)
    cdef cnp.int64_t[::1] prev = prev_arr
    cdef cnp.int64_t[::1] cur = cur_arr
    cdef cnp.int64_t[::1] tmp
    cdef cnp.int64_t best, cand
    with nogil:
        for i in range(1, m + 1):
            cur[0] = i
            for j in range(1, n + 1):
                best = prev[j] + 1
                cand = cur[j - 1] + 1
                if cand < best:
                    best = cand
                cand = prev[j - 1] + (0 if x[i - 1] == y[j - 1] else 1)
                if cand < best:
                    best = cand
                cur[j] = best
            tmp = prev
            prev = cur
            cur = tmp
    return int(prev[n])
