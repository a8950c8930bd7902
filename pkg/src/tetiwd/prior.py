"""Partition priors: Dirichlet-Multinomial / Ewens and its time-conditional form.

Clusters are linked across adjacent epochs into *chains*.  A block at epoch
``t`` either continues a block of epoch ``t-1`` (its predecessor, of size
``p``) or is new (``p = 0``).  The conditional prior of the blocks at ``t``
given epoch ``t-1`` is, for finite capacity ``k``,

    (k - k_prev)! / (k - k_prev - k_new)!
      * Gamma(xi + n_prev) / Gamma(n_t + xi + n_prev)
      * prod_b Gamma(p_b + xi/k + n_b) / Gamma(xi/k + p_b)

where ``k_prev`` counts blocks at ``t-1`` and ``k_new`` the blocks at ``t``
without predecessor.  With ``n_prev = 0`` this is the static
Dirichlet-Multinomial prior.  As ``k -> inf`` it becomes

    Gamma(xi + n_prev) / Gamma(n_t + xi + n_prev)
      * prod_{p_b > 0} Gamma(p_b + n_b) / Gamma(p_b)
      * prod_{p_b = 0} xi * Gamma(n_b)

which for ``n_prev = 0`` is the Ewens (CRP) distribution.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable

import numpy as np
from scipy.special import gammaln

INF = math.inf


@dataclass(frozen=True)
class PriorParams:
    xi: float = 1.0
    k: float = INF  # capacity; inf selects the CRP limit
    m_aux: int = 3

    def __post_init__(self):
        if not self.xi > 0:
            raise ValueError("xi must be positive")
        if self.m_aux < 1:
            raise ValueError("m_aux must be >= 1")
        if not (self.k == INF or (self.k >= 1 and float(self.k).is_integer())):
            raise ValueError("k must be a positive integer or inf")

    @property
    def finite(self) -> bool:
        return self.k != INF


def block_terms(pred, size, params: PriorParams):
    """Per-block log factor of the conditional prior (vectorised)."""
    pred = np.asarray(pred, dtype=np.float64)
    size = np.asarray(size, dtype=np.float64)
    if params.finite:
        a = params.xi / params.k + pred
        return gammaln(a + size) - gammaln(a)
    has = pred > 0
    cont = gammaln(np.where(has, pred + size, 1.0)) - gammaln(np.where(has, pred, 1.0))
    new = math.log(params.xi) + gammaln(np.where(size > 0, size, 1.0))
    return np.where(has, cont, new)


def _block_term(pred: float, size: float, params: PriorParams) -> float:
    """Scalar version of :func:`block_terms`."""
    if params.finite:
        a = params.xi / params.k + pred
        return math.lgamma(a + size) - math.lgamma(a)
    if pred > 0:
        return math.lgamma(pred + size) - math.lgamma(pred)
    return math.log(params.xi) + (math.lgamma(size) if size > 0 else 0.0)


def epoch_log_prior(sizes, preds, n_prev: int, k_prev: int, params: PriorParams) -> float:
    """log P(B_t | B_{t-1}) from block sizes and predecessor sizes."""
    sizes = np.asarray(sizes, dtype=np.float64)
    preds = np.asarray(preds, dtype=np.float64)
    n_t = sizes.sum()
    out = gammaln(params.xi + n_prev) - gammaln(n_t + params.xi + n_prev)
    if params.finite:
        free = params.k - k_prev
        k_new = int(np.sum(preds == 0))
        if k_new > free:
            return -INF
        out += gammaln(free + 1) - gammaln(free - k_new + 1)
    return float(out + np.sum(block_terms(preds, sizes, params)))


def _blocks(B) -> list[list[int]]:
    """Normalise a partition given as labels or as a list of blocks."""
    B = list(B)
    if B and isinstance(B[0], (list, tuple, set, frozenset)):
        return [sorted(b) for b in B if len(b)]
    groups: dict = {}
    for i, lab in enumerate(B):
        groups.setdefault(lab, []).append(i)
    return list(groups.values())


def log_prior_partition(B, params: PriorParams) -> float:
    """Static Dirichlet-Multinomial prior (Ewens for ``k = inf``)."""
    blocks = _blocks(B)
    if params.finite and len(blocks) > params.k:
        raise ValueError(f"partition has {len(blocks)} blocks but k = {params.k}")
    sizes = [len(b) for b in blocks]
    return epoch_log_prior(sizes, np.zeros(len(sizes)), 0, 0, params)


class ChainRegistry:
    """Chain-labelled partitions of every epoch.

    ``labels[t][i]`` is the chain ID of object ``i`` at epoch ``t``.  A chain
    links the blocks carrying its ID at adjacent epochs; chains never skip an
    epoch, so a chain present at ``t-1`` and ``t+1`` is also present at ``t``.
    Per epoch the registry keeps the block order (``order[t]``), block sizes
    and each object's block index; callers holding per-block arrays (covariance
    rows, sufficient statistics) keep them aligned with ``order[t]``.
    """

    def __init__(self, labels: Iterable, next_id: int | None = None):
        self.labels = [np.asarray(lab, dtype=np.int64).copy() for lab in labels]
        self.order: list[list[int]] = []
        self.counts: list[list[int]] = []
        self.index: list[dict[int, int]] = []
        self.pos: list[np.ndarray] = []
        for lab in self.labels:
            ids, inv, cnt = np.unique(lab, return_inverse=True, return_counts=True)
            self.order.append([int(c) for c in ids])
            self.counts.append([int(c) for c in cnt])
            self.index.append({int(c): i for i, c in enumerate(ids)})
            self.pos.append(inv.astype(np.int64).reshape(-1))
        top = max((int(lab.max()) for lab in self.labels if lab.size), default=-1)
        self.next_id = max(top + 1, next_id or 0)
        self._check_no_gaps()

    # -- queries -----------------------------------------------------------
    @property
    def T(self) -> int:
        return len(self.labels)

    def n(self, t: int) -> int:
        return len(self.labels[t])

    def k(self, t: int) -> int:
        return len(self.order[t])

    def size(self, t: int, chain: int) -> int:
        if t < 0 or t >= self.T:
            return 0
        i = self.index[t].get(chain)
        return 0 if i is None else self.counts[t][i]

    def has(self, t: int, chain: int) -> bool:
        return 0 <= t < self.T and chain in self.index[t]

    def chains(self) -> list[int]:
        return sorted({c for o in self.order for c in o})

    def preds(self, t: int) -> np.ndarray:
        return np.array([self.size(t - 1, c) for c in self.order[t]], dtype=np.float64)

    def succs(self, t: int) -> np.ndarray:
        return np.array([self.size(t + 1, c) for c in self.order[t]], dtype=np.float64)

    def n_total(self, t: int) -> int:
        return 0 if t < 0 or t >= self.T else sum(self.counts[t])

    def k_at(self, t: int) -> int:
        return 0 if t < 0 or t >= self.T else len(self.order[t])

    def epoch_prior(self, t: int, params: PriorParams) -> float:
        return epoch_log_prior(
            self.counts[t], self.preds(t), self.n_total(t - 1), self.k_at(t - 1), params
        )

    def log_prior(self, params: PriorParams) -> float:
        return sum(self.epoch_prior(t, params) for t in range(self.T))

    def copy(self) -> "ChainRegistry":
        new = ChainRegistry.__new__(ChainRegistry)
        new.labels = [lab.copy() for lab in self.labels]
        new.order = [list(o) for o in self.order]
        new.counts = [list(c) for c in self.counts]
        new.index = [dict(ix) for ix in self.index]
        new.pos = [p.copy() for p in self.pos]
        new.next_id = self.next_id
        return new

    def validate(self) -> None:
        for t in range(self.T):
            ids, cnt = np.unique(self.labels[t], return_counts=True)
            assert sorted(self.order[t]) == [int(c) for c in ids], "order/labels mismatch"
            for c, m in zip(ids, cnt):
                i = self.index[t][int(c)]
                assert self.order[t][i] == c
                assert self.counts[t][i] == m, "count mismatch"
            assert np.all(np.array(self.order[t])[self.pos[t]] == self.labels[t]), "pos mismatch"
            assert sum(self.counts[t]) == self.n(t)
        self._check_no_gaps()

    def _check_no_gaps(self) -> None:
        seen: dict[int, int] = {}
        for t in range(self.T):
            for c in self.order[t]:
                if c in seen and seen[c] != t - 1:
                    raise ValueError(f"chain {c} skips epochs {seen[c] + 1}..{t - 1}")
                seen[c] = t

    # -- mutation ----------------------------------------------------------
    def remove(self, t: int, l: int) -> tuple[int, int, bool, int | None, int | None]:
        """Take object ``l`` out of its block.

        Returns ``(chain, block_index, emptied, pred, succ)``.  When the block
        empties, its index is dropped from ``order[t]`` and ``pred``/``succ``
        name the chains it linked to (a chain cut in two gets a fresh ID for
        its later part).
        """
        i = int(self.pos[t][l])
        c = self.order[t][i]
        self.counts[t][i] -= 1
        self.pos[t][l] = -1
        self.labels[t][l] = -1
        if self.counts[t][i] > 0:
            return c, i, False, None, None
        self._drop(t, i)
        pred = c if self.has(t - 1, c) else None
        succ = c if self.has(t + 1, c) else None
        if pred is not None and succ is not None:
            succ = self.next_id
            self.next_id += 1
            self.relabel_forward(t + 1, c, succ)
        return c, i, True, pred, succ

    def _drop(self, t: int, i: int) -> None:
        c = self.order[t].pop(i)
        self.counts[t].pop(i)
        del self.index[t][c]
        for j in range(i, len(self.order[t])):
            self.index[t][self.order[t][j]] = j
        p = self.pos[t]
        p[p > i] -= 1

    def relabel_forward(self, t0: int, old: int, new: int) -> None:
        t = t0
        while t < self.T and old in self.index[t]:
            i = self.index[t].pop(old)
            self.order[t][i] = new
            self.index[t][new] = i
            lab = self.labels[t]
            lab[lab == old] = new
            t += 1

    def assign_existing(self, t: int, l: int, i: int) -> None:
        self.counts[t][i] += 1
        self.pos[t][l] = i
        self.labels[t][l] = self.order[t][i]

    def assign_new(self, t: int, l: int, pred: int | None = None, succ: int | None = None) -> int:
        """Open a new block for ``l`` (appended last); returns its chain ID."""
        if pred is not None:
            chain = pred
            if succ is not None:
                self.relabel_forward(t + 1, succ, pred)
        elif succ is not None:
            chain = succ
        else:
            chain = self.next_id
            self.next_id += 1
        assert chain not in self.index[t]
        self.order[t].append(chain)
        self.counts[t].append(1)
        self.index[t][chain] = len(self.order[t]) - 1
        self.pos[t][l] = len(self.order[t]) - 1
        self.labels[t][l] = chain
        return chain

    def open_slots(self, t: int) -> tuple[list[int], list[int]]:
        """Chains a new block at ``t`` could continue / be continued by."""
        here = self.index[t]
        back = [c for c in self.order[t - 1] if c not in here] if t > 0 else []
        fwd = [c for c in self.order[t + 1] if c not in here] if t + 1 < self.T else []
        return back, fwd


@dataclass
class PriorWeights:
    """Log prior weights for reassigning one held-out object at epoch ``t``.

    ``existing[i]`` refers to block ``order[t][i]``; ``new`` maps
    ``(pred, succ)`` (either may be ``None``) to the weight of opening a new
    block with those links.  ``new[(None, None)]`` is the total weight of a
    fresh chain, to be split across auxiliary components by the caller.
    """

    existing: np.ndarray
    new: dict


def assignment_prior_logweights(reg: ChainRegistry, t: int, params: PriorParams) -> PriorWeights:
    """Exact ratio of ``P(B_t|B_{t-1}) P(B_{t+1}|B_t)`` for every move of a held-out object.

    Weights are ratios against the hold-out state (object removed) up to a
    factor shared by all candidates, so they combine with likelihood values
    directly.
    """
    nb = np.asarray(reg.counts[t], dtype=np.float64)
    preds = reg.preds(t)
    succs = reg.succs(t)
    fin = params.finite
    # existing blocks: only the block's own term at t and its successor's term at
    # t+1 move, and both are ratios of Gamma functions one step apart
    c = params.xi / params.k if fin else 0.0
    w = np.log(c + preds + nb)
    has_s = succs > 0
    if np.any(has_s):
        w = w + np.where(has_s, np.log(c + nb + succs) - np.log(c + nb), 0.0)

    new = {}
    back, fwd = reg.open_slots(t)
    k_t = reg.k(t)
    if fin:
        k_prev = reg.k_at(t - 1)
        new_t = int(np.sum(preds == 0))
        base_cnt_t = _count_term(params.k, k_prev, new_t)
        if t + 1 < reg.T:
            new_next = int(np.sum(reg.preds(t + 1) == 0))
            base_cnt_n = _count_term(params.k, k_t, new_next)
    for p in [None] + back:
        psize = reg.size(t - 1, p) if p is not None else 0
        lw_t = _block_term(psize, 1, params)
        if fin:
            lw_t += _count_term(params.k, k_prev, new_t + (p is None)) - base_cnt_t
        for s in [None] + fwd:
            lw = lw_t
            if s is not None:
                ssize = reg.size(t + 1, s)
                lw += _block_term(1, ssize, params) - _block_term(0, ssize, params)
            if fin and t + 1 < reg.T:
                lw += _count_term(params.k, k_t + 1, new_next - (s is not None)) - base_cnt_n
            new[(p, s)] = lw
    return PriorWeights(w, new)


def _count_term(k, k_prev, k_new) -> float:
    free = k - k_prev
    if k_new > free or free < 0:
        return -INF
    return float(gammaln(free + 1) - gammaln(free - k_new + 1))


def printed_assignment_weight(
    kind: str, xi: float, m: int, n_prev: float = 0, n_cur: float = 0, n_next: float = 0
) -> float:
    """Closed-form relative weights as tabulated for the interior case.

    ``kind`` is one of ``existing``, ``both``, ``prev``, ``next``, ``fresh``.
    These are *not* the weights used by the sampler (which come from
    :func:`assignment_prior_logweights`); they are kept for comparison.
    """
    if kind == "existing":
        return (n_prev + n_cur) * n_next / n_cur
    if kind == "both":
        return n_prev * xi / m * n_next
    if kind == "prev":
        return xi / m * n_prev
    if kind == "next":
        return xi / m * n_next
    if kind == "fresh":
        return xi / m
    raise ValueError(f"unknown kind {kind!r}")
