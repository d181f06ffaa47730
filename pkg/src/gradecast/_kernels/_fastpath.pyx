# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled hot kernels; see _reference.py for the contract of each function."""

import numpy as np

cimport numpy as cnp

cnp.import_array()


def sgd_epoch(double[::1] targets, cnp.int64_t[::1] s_idx, cnp.int64_t[::1] c_idx,
              cnp.int64_t[::1] order, double[:, ::1] Us, double[:, ::1] Vs,
              double[::1] p, double[::1] q, double mu,
              double lr, double reg, bint use_bias, bint nonneg):
    cdef Py_ssize_t k = Us.shape[1]
    cdef Py_ssize_t n_dyads = order.shape[0]
    cdef Py_ssize_t i, f, s, c
    cdef double err, pred, uf, vf, un, vn
    for i in range(n_dyads):
        s = s_idx[order[i]]
        c = c_idx[order[i]]
        pred = mu + p[s] + q[c]
        for f in range(k):
            pred += Us[s, f] * Vs[c, f]
        err = targets[order[i]] - pred
        if use_bias:
            mu += lr * err
            p[s] += lr * (err - reg * p[s])
            q[c] += lr * (err - reg * q[c])
        for f in range(k):
            uf = Us[s, f]
            vf = Vs[c, f]
            un = uf + lr * (err * vf - reg * uf)
            vn = vf + lr * (err * uf - reg * vf)
            if nonneg:
                if un < 0.0:
                    un = 0.0
                if vn < 0.0:
                    vn = 0.0
            Us[s, f] = un
            Vs[c, f] = vn
    return mu


def delta_for_dyads(double[:, ::1] A, cnp.int64_t[::1] c_idx, cnp.int64_t[::1] hist_ptr,
                    cnp.int64_t[::1] hist_idx, double[::1] hist_w):
    cdef Py_ssize_t n_dyads = c_idx.shape[0]
    out_arr = np.zeros(n_dyads)
    cdef double[::1] out = out_arr
    cdef Py_ssize_t d, h
    cdef double acc
    for d in range(n_dyads):
        acc = 0.0
        for h in range(hist_ptr[d], hist_ptr[d + 1]):
            acc += A[hist_idx[h], c_idx[d]] * hist_w[h]
        out[d] = acc
    return out_arr


def predict_dyads(double[:, ::1] Us, double[:, ::1] Vs, double[:, ::1] A,
                  cnp.int64_t[::1] s_idx, cnp.int64_t[::1] c_idx,
                  cnp.int64_t[::1] hist_ptr, cnp.int64_t[::1] hist_idx,
                  double[::1] hist_w):
    cdef Py_ssize_t n_dyads = s_idx.shape[0]
    cdef Py_ssize_t k = Us.shape[1]
    out_arr = np.zeros(n_dyads)
    cdef double[::1] out = out_arr
    cdef Py_ssize_t d, f, h
    cdef double acc
    for d in range(n_dyads):
        acc = 0.0
        for f in range(k):
            acc += Us[s_idx[d], f] * Vs[c_idx[d], f]
        for h in range(hist_ptr[d], hist_ptr[d + 1]):
            acc += A[hist_idx[h], c_idx[d]] * hist_w[h]
        out[d] = acc
    return out_arr


def influence_data_term(double[::1] resid, cnp.int64_t[::1] c_idx, cnp.int64_t[::1] hist_ptr,
                        cnp.int64_t[::1] hist_idx, double[::1] hist_w, Py_ssize_t m):
    cdef Py_ssize_t n_dyads = c_idx.shape[0]
    out_arr = np.zeros((m, m))
    cdef double[:, ::1] out = out_arr
    cdef Py_ssize_t d, h
    for d in range(n_dyads):
        for h in range(hist_ptr[d], hist_ptr[d + 1]):
            out[hist_idx[h], c_idx[d]] += resid[d] * hist_w[h]
    return out_arr
