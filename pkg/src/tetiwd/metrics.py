"""Partition agreement and paired comparisons."""

from __future__ import annotations

import numpy as np
from scipy.stats import binomtest


def _pairs(x) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    return x * (x - 1) / 2.0


def contingency(a, b) -> np.ndarray:
    a = np.asarray(a)
    b = np.asarray(b)
    if a.shape != b.shape or a.ndim != 1:
        raise ValueError(f"partitions differ in length: {a.shape} vs {b.shape}")
    _, ia = np.unique(a, return_inverse=True)
    _, ib = np.unique(b, return_inverse=True)
    C = np.zeros((ia.max(initial=-1) + 1, ib.max(initial=-1) + 1), dtype=np.int64)
    np.add.at(C, (ia.ravel(), ib.ravel()), 1)
    return C


def adjusted_rand_index(a, b) -> float:
    """Hubert-Arabie adjusted Rand index of two label vectors."""
    C = contingency(a, b)
    n = C.sum()
    sum_ij = _pairs(C).sum()
    sum_a = _pairs(C.sum(axis=1)).sum()
    sum_b = _pairs(C.sum(axis=0)).sum()
    total = _pairs(n)
    expected = sum_a * sum_b / total if total > 0 else 0.0
    max_index = 0.5 * (sum_a + sum_b)
    if max_index == expected:
        # both partitions trivial (all singletons or one block) and identical in kind
        return 1.0
    return float((sum_ij - expected) / (max_index - expected))


def mean_ari(pred: list, truth: list) -> float:
    """Average per-epoch ARI."""
    if len(pred) != len(truth):
        raise ValueError("different numbers of epochs")
    return float(np.mean([adjusted_rand_index(p, q) for p, q in zip(pred, truth)]))


def sign_test(x, y) -> dict:
    """One-sided paired sign test of ``x > y``; ties are dropped."""
    d = np.asarray(x, dtype=np.float64) - np.asarray(y, dtype=np.float64)
    wins = int(np.sum(d > 0))
    losses = int(np.sum(d < 0))
    n = wins + losses
    p = binomtest(wins, n, 0.5, alternative="greater").pvalue if n else 1.0
    return {"wins": wins, "losses": losses, "ties": int(d.size - n), "p_value": float(p)}
