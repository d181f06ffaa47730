"""Pure-Python/numpy reference implementations of the hot kernels.

Semantics match ``_fastpath`` exactly: the SGD sweep visits dyads in the
given order and the scatter-adds accumulate in input order, so the two
backends agree to floating-point noise. This backend is the portability
fallback; the SGD sweep is a per-dyad Python loop and is slow on purpose.
"""

from __future__ import annotations

import numpy as np


def sgd_epoch(targets, s_idx, c_idx, order, Us, Vs, p, q, mu, lr, reg, use_bias, nonneg):
    """One SGD sweep over observed dyads; factor/bias arrays update in place.

    Per dyad: err = target - (mu + p[s] + q[c] + u_s . v_c), then
    u_s += lr*(err*v_c - reg*u_s) and v_c += lr*(err*u_s_old - reg*v_c);
    bias updates only when ``use_bias``; ``nonneg`` clamps the touched
    factor rows at 0 right after each update. Returns the updated mu.
    """
    for i in order:
        s = s_idx[i]
        c = c_idx[i]
        u = Us[s]
        v = Vs[c]
        err = targets[i] - (mu + p[s] + q[c] + float(u @ v))
        if use_bias:
            mu += lr * err
            p[s] += lr * (err - reg * p[s])
            q[c] += lr * (err - reg * q[c])
        u_new = u + lr * (err * v - reg * u)
        v_new = v + lr * (err * u - reg * v)
        if nonneg:
            np.maximum(u_new, 0.0, out=u_new)
            np.maximum(v_new, 0.0, out=v_new)
        Us[s] = u_new
        Vs[c] = v_new
    return mu


def delta_for_dyads(A, c_idx, hist_ptr, hist_idx, hist_w):
    """Per-dyad influence contribution: sum_h A[hist_idx[h], c] * hist_w[h]."""
    n_dyads = len(c_idx)
    counts = np.diff(hist_ptr)
    if hist_idx.size == 0:
        return np.zeros(n_dyads)
    dyad_of = np.repeat(np.arange(n_dyads), counts)
    prod = A[hist_idx, np.repeat(c_idx, counts)] * hist_w
    return np.bincount(dyad_of, weights=prod, minlength=n_dyads)


def predict_dyads(Us, Vs, A, s_idx, c_idx, hist_ptr, hist_idx, hist_w):
    """Raw (unclamped) predictions u_s . v_c + influence delta per dyad."""
    dots = np.einsum("ij,ij->i", Us[s_idx], Vs[c_idx])
    return dots + delta_for_dyads(A, c_idx, hist_ptr, hist_idx, hist_w)


def influence_data_term(resid, c_idx, hist_ptr, hist_idx, hist_w, m):
    """Accumulate D[c_i, c_j] = sum over dyads on c_j of resid * hist weight.

    The influence-matrix gradient is the quadratic penalty part minus D.
    """
    counts = np.diff(hist_ptr)
    if hist_idx.size == 0:
        return np.zeros((m, m))
    flat = hist_idx * m + np.repeat(c_idx, counts)
    contrib = np.repeat(resid, counts) * hist_w
    return np.bincount(flat, weights=contrib, minlength=m * m).reshape(m, m)
