"""Compiled kernel for the batched block-statistics likelihood.

Falls back to the NumPy implementation when numba is unavailable.
"""

from __future__ import annotations

import math

import numpy as np

try:
    from numba import njit
except ImportError:  # pragma: no cover
    njit = None


def _loglik_batch(S, nb, A, alpha):
    """Per-unit-dof log-likelihood for a stack of candidates (see ``loglik_from_stats``)."""
    nc, K, _ = S.shape
    out = np.empty(nc)
    G = np.empty((K, K))
    Y = np.empty((K, K + 1))
    r = np.empty(K)
    la = math.log(alpha)
    for c in range(nc):
        n = 0.0
        for i in range(K):
            r[i] = math.sqrt(nb[c, i])
            n += nb[c, i]
        for i in range(K):
            for j in range(K):
                G[i, j] = r[i] * A[c, i, j] * r[j]
            G[i, i] += alpha
        # Cholesky in place (lower triangle)
        logdet = 0.0
        for j in range(K):
            s = G[j, j]
            for p in range(j):
                s -= G[j, p] * G[j, p]
            d = math.sqrt(s)
            G[j, j] = d
            logdet += 2.0 * math.log(d)
            for i in range(j + 1, K):
                s = G[i, j]
                for p in range(j):
                    s -= G[i, p] * G[j, p]
                G[i, j] = s / d
        # right-hand sides: B = diag(r) A and r
        for i in range(K):
            for j in range(K):
                Y[i, j] = r[i] * A[c, i, j]
            Y[i, K] = r[i]
        for col in range(K + 1):
            for i in range(K):
                s = Y[i, col]
                for p in range(i):
                    s -= G[i, p] * Y[p, col]
                Y[i, col] = s / G[i, i]
            for i in range(K - 1, -1, -1):
                s = Y[i, col]
                for p in range(i + 1, K):
                    s -= G[p, i] * Y[p, col]
                Y[i, col] = s / G[i, i]
        one_w_one = 0.0
        for i in range(K):
            one_w_one += r[i] * Y[i, K]
        # tr(M S) with M = A - B^T G^{-1} B
        trMS = 0.0
        for i in range(K):
            for j in range(K):
                sij = S[c, i, j]
                if sij != 0.0:
                    bty = 0.0
                    for p in range(K):
                        bty += r[p] * A[c, p, i] * Y[p, j]
                    trMS += (A[c, i, j] - bty) * sij
        qSq = 0.0
        for i in range(K):
            if r[i] > 0.0:
                qi = Y[i, K] / r[i]
                for j in range(K):
                    if r[j] > 0.0:
                        qSq += qi * S[c, i, j] * Y[j, K] / r[j]
        logdet_sigma = (n - K) * la + logdet
        logpdet = math.log(n) - logdet_sigma - math.log(one_w_one)
        out[c] = 0.5 * logpdet + 0.25 * (-trMS / (alpha * alpha) - qSq / one_w_one)
    return out


if njit is not None:
    loglik_batch = njit(cache=True, fastmath=False)(_loglik_batch)
else:  # pragma: no cover
    loglik_batch = None
