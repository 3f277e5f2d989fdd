# Compiled log-sum-exp matrix contraction:
#   out[i, r] = log sum_j exp(L[i, j] + M[j, r])
# Exact per-entry max stabilisation; -inf entries encode zero mass.

import numpy as np

cimport numpy as cnp
from libc.math cimport exp, log, INFINITY

cnp.import_array()


def logmatmulexp(double[:, ::1] L, double[:, ::1] M):
    cdef Py_ssize_t m = L.shape[0]
    cdef Py_ssize_t n = L.shape[1]
    cdef Py_ssize_t r = M.shape[1]
    if M.shape[0] != n:
        raise ValueError("inner dimensions do not match")

    out_arr = np.empty((m, r), dtype=np.float64)
    cdef double[:, ::1] out = out_arr
    cdef Py_ssize_t i, j, c
    cdef double hi, v, acc

    for i in range(m):
        for c in range(r):
            hi = -INFINITY
            for j in range(n):
                v = L[i, j] + M[j, c]
                if v > hi:
                    hi = v
            if hi == -INFINITY:
                out[i, c] = -INFINITY
                continue
            acc = 0.0
            for j in range(n):
                v = L[i, j] + M[j, c]
                if v > -INFINITY:
                    acc += exp(v - hi)
            out[i, c] = hi + log(acc)
    return out_arr


def logmodeexp(double[:, ::1] L, double[:, :, ::1] T):
    # out[a, i, c] = log sum_j exp(L[i, j] + T[a, j, c])
    cdef Py_ssize_t m = L.shape[0]
    cdef Py_ssize_t n = L.shape[1]
    cdef Py_ssize_t batch = T.shape[0]
    cdef Py_ssize_t rest = T.shape[2]
    if T.shape[1] != n:
        raise ValueError("middle dimension does not match")

    out_arr = np.empty((batch, m, rest), dtype=np.float64)
    cdef double[:, :, ::1] out = out_arr
    cdef Py_ssize_t a, i, j, c
    cdef double hi, v, acc

    for a in range(batch):
        for i in range(m):
            for c in range(rest):
                hi = -INFINITY
                for j in range(n):
                    v = L[i, j] + T[a, j, c]
                    if v > hi:
                        hi = v
                if hi == -INFINITY:
                    out[a, i, c] = -INFINITY
                    continue
                acc = 0.0
                for j in range(n):
                    v = L[i, j] + T[a, j, c]
                    if v > -INFINITY:
                        acc += exp(v - hi)
                out[a, i, c] = hi + log(acc)
    return out_arr
