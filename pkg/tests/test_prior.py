import math

import numpy as np
import pytest
from hypothesis import assume, given, settings
from hypothesis import strategies as st

from oracles import labels_of, linkings, seating_logprob, set_partitions
from tetiwd.prior import (
    ChainRegistry,
    PriorParams,
    assignment_prior_logweights,
    epoch_log_prior,
    log_prior_partition,
    printed_assignment_weight,
)

KS = [2, 3, 50, math.inf]
XIS = [0.5, 1.0, 5.0]
PREVS = [[], [2], [1, 1], [2, 1], [3, 1, 1]]


def _states(n, prev):
    for blocks in set_partitions(n):
        lab = labels_of(blocks, n)
        sizes = np.bincount(lab)
        for links in linkings(len(blocks), len(prev)):
            preds = [prev[links[b]] if b in links else 0 for b in range(len(blocks))]
            yield lab, links, sizes, preds


def _prior(sizes, preds, prev, params):
    return epoch_log_prior(sizes, preds, sum(prev), len(prev), params)


# a finite k must hold every block of the previous epoch
PREV_K = [(prev, k) for prev in PREVS for k in KS if k is None or np.isinf(k) or len(prev) <= k]


@pytest.mark.parametrize("xi", XIS)
@pytest.mark.parametrize("prev,k", PREV_K)
def test_conditional_prior_sums_to_one(prev, k, xi):
    params = PriorParams(xi, k)
    for n in range(1, 5):
        tot = sum(math.exp(_prior(s, p, prev, params)) for _, _, s, p in _states(n, prev))
        assert tot == pytest.approx(1.0, abs=1e-10)


@pytest.mark.parametrize("prev,k", PREV_K)
def test_prior_matches_sequential_seating(prev, k):
    params = PriorParams(1.5, k)
    for lab, links, s, p in _states(4, prev):
        ref = seating_logprob(lab, links, prev, 1.5, k)
        got = _prior(s, p, prev, params)
        if ref == -math.inf:
            assert got == -math.inf
        else:
            assert got == pytest.approx(ref, abs=1e-12)


@pytest.mark.parametrize("k", KS)
@pytest.mark.parametrize("prev", [[], [2, 1]])
def test_marginal_of_next_size(k, prev):
    """Summing object 4 out of P_4 gives P_3."""
    params = PriorParams(0.7, k)
    for lab, links, s, p in _states(3, prev):
        target = math.exp(_prior(s, p, prev, params))
        acc = 0.0
        k3 = len(s)
        for lab4, links4, s4, p4 in _states(4, prev):
            if lab4[3] < k3 and not np.array_equal(lab4[:3], lab):
                continue
            if lab4[3] >= k3 and not np.array_equal(lab4[:3], lab):
                continue
            if {b: v for b, v in links4.items() if b < k3} != links:
                continue
            acc += math.exp(_prior(s4, p4, prev, params))
        assert acc == pytest.approx(target, abs=1e-10)


def test_static_prior_is_ewens():
    # CRP probability of {0,1},{2}: xi^2 * 1! * 0! / (xi (xi+1) (xi+2))
    xi = 2.0
    got = math.exp(log_prior_partition([0, 0, 1], PriorParams(xi)))
    assert got == pytest.approx(xi**2 / (xi * (xi + 1) * (xi + 2)))
    assert math.exp(log_prior_partition([[0, 1], [2]], PriorParams(xi))) == pytest.approx(got)


def test_too_many_blocks_for_k():
    with pytest.raises(ValueError):
        log_prior_partition([0, 1, 2], PriorParams(1.0, 2))


def test_param_validation():
    with pytest.raises(ValueError):
        PriorParams(0.0)
    with pytest.raises(ValueError):
        PriorParams(1.0, 2.5)
    with pytest.raises(ValueError):
        PriorParams(1.0, m_aux=0)


# -- registry ---------------------------------------------------------------


def test_registry_single_chain():
    reg = ChainRegistry([np.zeros(5, int), np.zeros(4, int), np.zeros(6, int)])
    assert reg.chains() == [0]
    assert [reg.counts[t] for t in range(3)] == [[5], [4], [6]]


def test_registry_rejects_gaps():
    with pytest.raises(ValueError):
        ChainRegistry([[0, 0], [1, 1], [0, 0]])


def test_remove_splits_chain_through_emptied_block():
    reg = ChainRegistry([[0, 0], [0, 1], [0, 0]])
    chain, _, emptied, pred, succ = reg.remove(1, 0)
    assert emptied and pred == 0 and succ is not None and succ != 0
    assert set(reg.labels[2]) == {succ}
    # re-linking both sides restores the original chain
    assert reg.assign_new(1, 0, pred, succ) == 0
    assert set(reg.labels[2]) == {0}
    reg.validate()


def _full_prior(reg, params):
    return reg.log_prior(params)


registries = st.lists(
    st.lists(st.integers(0, 3), min_size=1, max_size=4), min_size=1, max_size=3
)


@settings(max_examples=60, deadline=None)
@given(raw=registries, which=st.data(), k=st.sampled_from([3, 5, math.inf]), xi=st.sampled_from([0.5, 2.0]))
def test_gibbs_weights_are_exact_ratios(raw, which, k, xi):
    """Weights equal P(state with l moved) / P(hold-out state) up to one shared constant."""
    try:
        reg = ChainRegistry(raw)
    except ValueError:
        return  # chain with a gap
    params = PriorParams(xi, k)
    if any(reg.k(t) > k for t in range(reg.T)):
        return
    # ratios are only defined for states of positive prior mass
    assume(_full_prior(reg, params) > -math.inf)
    t = which.draw(st.integers(0, reg.T - 1))
    l = which.draw(st.integers(0, reg.n(t) - 1))
    reg.remove(t, l)
    pw = assignment_prior_logweights(reg, t, params)
    vals = []
    for i in range(reg.k(t)):
        r = reg.copy()
        r.assign_existing(t, l, i)
        vals.append((pw.existing[i], _full_prior(r, params)))
    for (p, s), w in pw.new.items():
        r = reg.copy()
        r.assign_new(t, l, p, s)
        vals.append((w, _full_prior(r, params)))
    finite = [(w, f) for w, f in vals if w > -math.inf]
    assert all(f == -math.inf for w, f in vals if w == -math.inf)
    offs = [f - w for w, f in finite]
    assert max(offs) - min(offs) < 1e-9


def test_printed_weights_interior_fresh():
    assert printed_assignment_weight("fresh", 2.0, 4) == pytest.approx(0.5)
    assert printed_assignment_weight("both", 1.0, 2, n_prev=3, n_next=2) == pytest.approx(3.0)
    with pytest.raises(ValueError):
        printed_assignment_weight("nope", 1.0, 1)
