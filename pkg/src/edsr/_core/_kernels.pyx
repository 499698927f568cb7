# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled CTC forward-backward and alignment kernels."""

import numpy as np
cimport numpy as cnp
from libc.math cimport exp, log, INFINITY

cnp.import_array()


cdef inline double _lse(double a, double b) noexcept nogil:
    cdef double m
    if a == -INFINITY:
        return b
    if b == -INFINITY:
        return a
    if a > b:
        return a + log(1.0 + exp(b - a))
    return b + log(1.0 + exp(a - b))


def ctc_forward_backward(logp, target, long blank=0):
    cdef double[:, ::1] lp = np.ascontiguousarray(logp, dtype=np.float64)
    cdef long[::1] tgt = np.ascontiguousarray(target, dtype=np.int64)
    cdef Py_ssize_t T = lp.shape[0], V = lp.shape[1]
    cdef Py_ssize_t U = tgt.shape[0], S = 2 * U + 1
    cdef Py_ssize_t t, s
    cdef long[::1] ext = np.full(S, blank, dtype=np.int64)
    cdef unsigned char[::1] skip = np.zeros(S, dtype=np.uint8)
    for s in range(U):
        ext[2 * s + 1] = tgt[s]
    for s in range(2, S):
        skip[s] = ext[s] != blank and ext[s] != ext[s - 2]

    alpha_arr = np.full((T, S), -np.inf)
    cdef double[:, ::1] alpha = alpha_arr
    cdef double v
    alpha[0, 0] = lp[0, ext[0]]
    if S > 1:
        alpha[0, 1] = lp[0, ext[1]]
    with nogil:
        for t in range(1, T):
            for s in range(S):
                v = alpha[t - 1, s]
                if s >= 1:
                    v = _lse(v, alpha[t - 1, s - 1])
                if s >= 2 and skip[s]:
                    v = _lse(v, alpha[t - 1, s - 2])
                if v != -INFINITY:
                    v = v + lp[t, ext[s]]
                alpha[t, s] = v

    cdef double loglik = alpha[T - 1, S - 1]
    if S > 1:
        loglik = _lse(loglik, alpha[T - 1, S - 2])
    occ_arr = np.zeros((T, V))
    if loglik == -INFINITY:
        return float(loglik), occ_arr

    beta_arr = np.full((T, S), -np.inf)
    cdef double[:, ::1] beta = beta_arr
    cdef double[:, ::1] occ = occ_arr
    beta[T - 1, S - 1] = 0.0
    if S > 1:
        beta[T - 1, S - 2] = 0.0
    with nogil:
        for t in range(T - 2, -1, -1):
            for s in range(S):
                v = beta[t + 1, s] + lp[t + 1, ext[s]]
                if s + 1 < S:
                    v = _lse(v, beta[t + 1, s + 1] + lp[t + 1, ext[s + 1]])
                if s + 2 < S and skip[s + 2]:
                    v = _lse(v, beta[t + 1, s + 2] + lp[t + 1, ext[s + 2]])
                beta[t, s] = v
        for t in range(T):
            for s in range(S):
                v = alpha[t, s] + beta[t, s]
                if v != -INFINITY:
                    occ[t, ext[s]] += exp(v - loglik)
    return float(loglik), occ_arr


def align_counts(ref, hyp, double w_sub=1.0, double w_del=1.0, double w_ins=1.0):
    cdef long[::1] r = np.ascontiguousarray(ref, dtype=np.int64)
    cdef long[::1] h = np.ascontiguousarray(hyp, dtype=np.int64)
    cdef Py_ssize_t n = r.shape[0], m = h.shape[0], i, j
    cdef double[:, ::1] cost = np.zeros((n + 1, m + 1))
    cdef long[:, ::1] subs = np.zeros((n + 1, m + 1), dtype=np.int64)
    cdef long[:, ::1] dels = np.zeros((n + 1, m + 1), dtype=np.int64)
    cdef double bc, c
    cdef long bs, bd, sv
    for i in range(1, n + 1):
        cost[i, 0] = i * w_del
        dels[i, 0] = i
    for j in range(1, m + 1):
        cost[0, j] = j * w_ins
    with nogil:
        for i in range(1, n + 1):
            for j in range(1, m + 1):
                if r[i - 1] == h[j - 1]:
                    bc = cost[i - 1, j - 1]
                    bs = subs[i - 1, j - 1]
                else:
                    bc = cost[i - 1, j - 1] + w_sub
                    bs = subs[i - 1, j - 1] + 1
                bd = dels[i - 1, j - 1]
                c = cost[i - 1, j] + w_del
                sv = subs[i - 1, j]
                if c < bc or (c == bc and sv > bs):
                    bc = c
                    bs = sv
                    bd = dels[i - 1, j] + 1
                c = cost[i, j - 1] + w_ins
                sv = subs[i, j - 1]
                if c < bc or (c == bc and sv > bs):
                    bc = c
                    bs = sv
                    bd = dels[i, j - 1]
                cost[i, j] = bc
                subs[i, j] = bs
                dels[i, j] = bd
    return int(subs[n, m]), int(dels[n, m]), int(m - n + dels[n, m])
