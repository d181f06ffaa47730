"""Proximal operators used by the ADMM solver."""

from __future__ import annotations

import numpy as np


def soft_threshold(X, threshold):
    """One-sided elementwise shrinkage max(X - threshold, 0).

    This is the proximal map of threshold * ||Z||_1 restricted to Z >= 0,
    matching the non-negativity of the influence matrix.
    """
    if threshold < 0:
        raise ValueError("threshold must be >= 0")
    return np.maximum(np.asarray(X, dtype=np.float64) - threshold, 0.0)


def shrink_singular_values(X, threshold):
    """Shrink the singular values of X by ``threshold`` (nuclear-norm prox).

    Returns U diag((sigma - threshold)_+) V^T from the SVD of X.
    """
    if threshold < 0:
        raise ValueError("threshold must be >= 0")
    X = np.asarray(X, dtype=np.float64)
    if not np.all(np.isfinite(X)):
        raise np.linalg.LinAlgError("cannot decompose a matrix with non-finite entries")
    U, s, Vt = np.linalg.svd(X, full_matrices=False)
    return (U * np.maximum(s - threshold, 0.0)) @ Vt
