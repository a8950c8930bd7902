"""Independent reference computations used across the test suite."""

from __future__ import annotations

import itertools
import math

import numpy as np

from tetiwd.likelihood import loglik_tiw_sigma


def set_partitions(n):
    """All set partitions of ``range(n)`` as lists of blocks."""
    if n == 0:
        yield []
        return
    for p in set_partitions(n - 1):
        for i in range(len(p)):
            yield p[:i] + [p[i] + [n - 1]] + p[i + 1 :]
        yield p + [[n - 1]]


def labels_of(blocks, n):
    lab = np.empty(n, dtype=np.int64)
    for j, b in enumerate(blocks):
        lab[b] = j
    return lab


def linkings(k_now, k_prev):
    """Injective partial maps from current blocks to previous blocks, as dicts."""
    for r in range(min(k_now, k_prev) + 1):
        for src in itertools.combinations(range(k_now), r):
            for dst in itertools.permutations(range(k_prev), r):
                yield dict(zip(src, dst))


def seating_logprob(labels, links, prev_sizes, xi, k=math.inf):
    """Probability of (partition, links) by sequential seating.

    Objects arrive in index order.  A previous chain ``j`` attracts weight
    ``c + p_j + n_j`` (``c = xi/k``, zero for infinite ``k``); all empty slots
    together attract ``xi`` (infinite ``k``) or ``free * xi/k``.
    """
    finite = math.isfinite(k)
    c = xi / k if finite else 0.0
    n_prev = float(sum(prev_sizes))
    k_prev = len(prev_sizes)
    counts: dict = {}
    fresh_open = 0
    lp = 0.0
    for i, b in enumerate(labels):
        b = int(b)
        total = xi + n_prev + i
        pred = prev_sizes[links[b]] if b in links else 0
        if b in counts:
            w = c + pred + counts[b]
        elif b in links:
            w = c + pred
        else:
            if finite:
                free = k - k_prev - fresh_open
                if free <= 0:
                    return -math.inf
                w = free * c
            else:
                w = xi
            fresh_open += 1
        counts[b] = counts.get(b, 0) + 1
        lp += math.log(w) - math.log(total)
    return lp


def block_lik(D, labels, beta, alpha, dof):
    lab = np.asarray(labels)
    Z = np.eye(lab.max() + 1)[lab]
    Sigma = alpha * np.eye(len(lab)) + beta * Z @ Z.T
    return loglik_tiw_sigma(D, Sigma, dof)


def _canon(lab):
    lab = np.asarray(lab)
    _, first, inv = np.unique(lab, return_index=True, return_inverse=True)
    rank = np.empty(len(first), dtype=np.int64)
    rank[np.argsort(first)] = np.arange(len(first))
    return tuple(int(x) for x in rank[inv.reshape(-1)])


def enumerate_posterior(Ds, beta, alpha, dof, xi=1.0):
    """Exact posterior over (partitions, adjacent-epoch links) for fixed ``A = beta*I``.

    Supports one or two epochs.  Keys are ``(labels_1, ..., links)`` with
    canonical labels and links as sorted ``(block_t, block_t+1)`` pairs.
    """
    n1 = Ds[0].shape[0]
    states = {}
    for p1 in set_partitions(n1):
        l1 = labels_of(p1, n1)
        s1 = np.bincount(l1)
        lp1 = seating_logprob(l1, {}, [], xi) + block_lik(Ds[0], l1, beta, alpha, dof)
        if len(Ds) == 1:
            states[(_canon(l1),)] = lp1
            continue
        n2 = Ds[1].shape[0]
        for p2 in set_partitions(n2):
            l2 = labels_of(p2, n2)
            lik2 = block_lik(Ds[1], l2, beta, alpha, dof)
            for links in linkings(len(p2), len(p1)):
                lp = lp1 + lik2 + seating_logprob(l2, links, list(s1), xi)
                M = tuple(sorted((a, b) for b, a in links.items()))
                states[(_canon(l1), _canon(l2), M)] = lp
    keys = list(states)
    lp = np.array([states[k] for k in keys])
    p = np.exp(lp - lp.max())
    return keys, p / p.sum()


def state_key(reg):
    """Key of a sampler registry in the format of :func:`enumerate_posterior`."""
    labs = [np.asarray(l) for l in reg.labels]
    if len(labs) == 1:
        return (_canon(labs[0]),)
    l1, l2 = _canon(labs[0]), _canon(labs[1])
    M = []
    for a in range(max(l1) + 1):
        chain = labs[0][l1.index(a)]
        if chain in reg.index[1]:
            b = l2[int(np.flatnonzero(labs[1] == chain)[0])]
            M.append((a, b))
    return (l1, l2, tuple(sorted(M)))


def total_variation(keys, p, counts, n):
    q = np.array([counts.get(k, 0) / n for k in keys])
    missing = n - sum(counts.get(k, 0) for k in keys)
    return 0.5 * (np.abs(p - q).sum() + missing / n)


def random_spd(rng, k, scale=1.0):
    X = rng.standard_normal((k, k + 2))
    return scale * (X @ X.T) / (k + 2) + 0.1 * np.eye(k)


def _tiw_loglik_batch(D, Sigma, dof):
    """Dense translation-invariant log-likelihood for a stack of covariances."""
    W = np.linalg.inv(Sigma)
    w1 = W.sum(axis=-1)
    Wt = W - w1[..., :, None] * w1[..., None, :] / w1.sum(axis=-1)[..., None, None]
    ev = np.linalg.eigvalsh(0.5 * (Wt + np.swapaxes(Wt, -1, -2)))
    # the smallest eigenvalue belongs to the constant vector
    ldg = np.log(ev[..., 1:]).sum(axis=-1)
    return 0.5 * dof * ldg + 0.25 * dof * np.einsum("...ij,ij->...", Wt, D)


def mc_partition_posterior(D, alpha, dof, wishart_dof, draws=20000, seed=0, xi=1.0):
    """Posterior over partitions of one epoch with ``A`` integrated against its prior.

    ``A ~ Wishart(wishart_dof, I / wishart_dof)``; the integral is a plain
    Monte-Carlo average over prior draws.
    """
    from scipy.special import logsumexp
    from scipy.stats import wishart

    rng = np.random.default_rng(seed)
    n = D.shape[0]
    keys, lps = [], []
    for blocks in set_partitions(n):
        lab = labels_of(blocks, n)
        k = len(blocks)
        Z = np.eye(k)[lab]
        A = wishart(df=wishart_dof, scale=np.eye(k) / wishart_dof).rvs(draws, random_state=rng)
        A = np.asarray(A).reshape(draws, k, k)
        Sigma = alpha * np.eye(n) + Z @ A @ Z.T
        ll = _tiw_loglik_batch(D, Sigma, dof)
        keys.append((_canon(lab),))
        lps.append(seating_logprob(lab, {}, [], xi) + logsumexp(ll) - math.log(draws))
    lp = np.array(lps)
    p = np.exp(lp - lp.max())
    return keys, p / p.sum()
