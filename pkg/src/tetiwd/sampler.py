"""MCMC engine: Gibbs reassignment of objects, MH updates of ``A_t`` and ``alpha``.

State per epoch ``t``: the chain-labelled partition (shared
:class:`~tetiwd.prior.ChainRegistry`), the between-cluster covariance ``A_t``
and the block sums ``S_t = Z_t^T D_t Z_t``; rows of ``A_t`` and ``S_t``
follow ``registry.order[t]``.  Likelihoods are cached per unit of the
likelihood degrees of freedom so annealing only rescales them.

Reassigning an object proposes every existing block, a new block for each
admissible (predecessor, successor) link pair and ``m_aux`` fresh chains.
Every new block needs a new row of ``A_t``; it is drawn from the fresh-birth
conditional ``q`` and weighted by ``p(A)/q``, which makes the move an exact
Gibbs step on an auxiliary-variable extension of the posterior.
"""

from __future__ import annotations

import logging
import math
import time
from dataclasses import asdict, dataclass, field, fields

import numpy as np

from . import covprior as cp
from .distance import DistanceSeries, gram_from_distances, write_text
from .likelihood import block_sums, build_block_cov, loglik_from_stats, loglik_tiw
from .prior import INF, ChainRegistry, PriorParams, assignment_prior_logweights

logger = logging.getLogger(__name__)


@dataclass
class SamplerConfig:
    sweeps: int = 500  # total, burn-in included
    burn_in: int = 250
    dof: object = None  # likelihood dof: number, per-epoch list, or None (rank of K)
    wishart_dof: float = 20.0
    s: float = 1.0
    normalized: bool = True
    xi: float = 1.0
    k: float = INF
    m_aux: int = 3
    alpha: float | None = None  # initial value; None estimates it from the data
    sample_alpha: bool = True
    alpha_shape: float = 1.0
    alpha_scale: float = 10.0
    alpha_step: float = 0.1
    fixed_A: float | None = None  # A_t = fixed_A * I, no A moves
    mh_steps: int = 3
    mh_dof: float = 100.0
    anneal_gamma: float = 1.05
    anneal_max: int = 200
    anneal_patience: int = 10
    anneal_wishart: bool = True  # scale the Wishart prior dof along with the likelihood dof
    debug: bool = False
    check_every: int = 50
    record_timing: bool = False

    def __post_init__(self):
        if self.sweeps < 0 or self.burn_in < 0 or self.burn_in > self.sweeps:
            raise ValueError("need 0 <= burn_in <= sweeps")
        if self.alpha is not None and not self.alpha > 0:
            raise ValueError("alpha must be positive")
        if self.anneal_gamma < 1:
            raise ValueError("anneal_gamma must be >= 1")
        if self.fixed_A is not None and not self.fixed_A > 0:
            raise ValueError("fixed_A must be positive")
        if not self.wishart_dof > 0 or not self.mh_dof > 0:
            raise ValueError("degrees of freedom must be positive")
        PriorParams(self.xi, self.k, self.m_aux)

    @classmethod
    def from_dict(cls, d: dict) -> "SamplerConfig":
        known = {f.name for f in fields(cls)}
        extra = set(d) - known
        if extra:
            raise ValueError(f"unknown sampler keys: {sorted(extra)}")
        d = dict(d)
        if d.get("k") in ("inf", None):
            d["k"] = INF
        return cls(**d)

    def to_dict(self) -> dict:
        d = asdict(self)
        if d["k"] == INF:
            d["k"] = "inf"
        return d

    @property
    def prior(self) -> PriorParams:
        return PriorParams(self.xi, self.k, self.m_aux)

    @property
    def wishart(self) -> cp.WishartParams:
        return cp.WishartParams(self.wishart_dof, self.s, self.normalized)


@dataclass
class ModelState:
    reg: ChainRegistry
    A: list
    S: list
    alpha: float
    ll1: np.ndarray  # log-likelihood per unit dof, per epoch
    sweep: int = 0

    def copy(self) -> "ModelState":
        return ModelState(
            self.reg.copy(),
            [a.copy() for a in self.A],
            [s.copy() for s in self.S],
            self.alpha,
            self.ll1.copy(),
            self.sweep,
        )

    @property
    def T(self) -> int:
        return self.reg.T

    def ks(self) -> list[int]:
        return [self.reg.k(t) for t in range(self.T)]

    def partitions(self) -> list[np.ndarray]:
        """Per-epoch labels canonicalised by first occurrence."""
        return [canonical(lab) for lab in self.reg.labels]

    def to_json(self) -> dict:
        return {
            "alpha": float(self.alpha),
            "sweep": int(self.sweep),
            "assignments": [[int(c) for c in lab] for lab in self.reg.labels],
            "chains": [[int(c) for c in o] for o in self.reg.order],
            "sizes": [[int(c) for c in cnt] for cnt in self.reg.counts],
            "A": [np.asarray(a).tolist() for a in self.A],
        }


def canonical(labels) -> np.ndarray:
    labels = np.asarray(labels)
    _, first, inv = np.unique(labels, return_index=True, return_inverse=True)
    rank = np.empty(len(first), dtype=np.int64)
    rank[np.argsort(first)] = np.arange(len(first))
    return rank[inv.reshape(-1)]


@dataclass
class Trace:
    rows: list = field(default_factory=list)

    def append(self, **row) -> None:
        self.rows.append(row)

    def __len__(self) -> int:
        return len(self.rows)

    def column(self, name: str) -> list:
        return [r[name] for r in self.rows]

    def to_csv(self, path, T: int) -> None:
        header = ["sweep", "phase", "log_post", "alpha", "dof_scale"]
        header += [f"k_{t + 1}" for t in range(T)] + [f"acc_{t + 1}" for t in range(T)]
        header += ["runtime_s"]
        lines = [",".join(header)]
        for r in self.rows:
            vals = [str(r["sweep"]), r["phase"], _fmt(r["log_post"]), _fmt(r["alpha"]), _fmt(r["dof_scale"])]
            vals += [str(k) for k in r["k"]] + [_fmt(a) for a in r["acc"]]
            vals.append("" if r.get("runtime_s") is None else _fmt(r["runtime_s"]))
            lines.append(",".join(vals))
        write_text(path, "\n".join(lines) + "\n")


def _fmt(x) -> str:
    return format(float(x), ".12g")


class Sampler:
    """Te-TiWD Gibbs sampler bound to one data set and one configuration."""

    def __init__(self, data: DistanceSeries, config: SamplerConfig, rng: np.random.Generator):
        if not isinstance(data, DistanceSeries):
            data = DistanceSeries(tuple(np.asarray(D, dtype=np.float64) for D in data))
        self.data = data
        self.cfg = config
        self.rng = rng
        self.params = config.prior
        self.wp = config.wishart
        self.dof = self._resolve_dof(config.dof)
        self.dof_scale = 1.0
        self.fixed = config.fixed_A is not None
        self.state: ModelState | None = None
        self.acc = np.zeros(data.T)

    # -- setup -------------------------------------------------------------
    def _resolve_dof(self, dof) -> np.ndarray:
        T = self.data.T
        if dof is None:
            out = []
            for D in self.data.matrices:
                ev = np.linalg.eigvalsh(gram_from_distances(D).K) if D.shape[0] > 1 else np.zeros(1)
                out.append(max(1, int(np.sum(ev > 1e-9 * max(ev.max(), 1e-300)))))
            return np.asarray(out, dtype=np.float64)
        arr = np.broadcast_to(np.asarray(dof, dtype=np.float64), (T,)).copy()
        if np.any(arr <= 0):
            raise ValueError("likelihood dof must be positive")
        return arr

    def init_state(self) -> ModelState:
        """One chain through all epochs; ``A_t`` a 1x1 draw from the prior chain."""
        cfg = self.cfg
        T = self.data.T
        reg = ChainRegistry([np.zeros(n, dtype=np.int64) for n in self.data.sizes], next_id=1)
        A, S = [], []
        prev = None
        for t in range(T):
            if self.fixed:
                a = np.array([[cfg.fixed_A]])
            else:
                a = cp.sample_A_transition(prev, [0] if prev is not None else [], [0], self.wp, self.rng)
            A.append(a)
            S.append(block_sums(self.data[t], reg.pos[t], 1))
            prev = a
        if cfg.alpha is not None:
            alpha = float(cfg.alpha)
        else:
            alpha = initial_alpha(self.data)
        st = ModelState(reg, A, S, alpha, np.zeros(T))
        for t in range(T):
            st.ll1[t] = self._ll1(st, t)
        self.state = st
        return st

    def set_state(self, labels, A, alpha: float) -> ModelState:
        """Install a given state; ``A[t]`` rows follow the sorted chain IDs of epoch ``t``."""
        reg = ChainRegistry(labels)
        A = [np.atleast_2d(np.asarray(a, dtype=np.float64)).copy() for a in A]
        S = [block_sums(self.data[t], reg.pos[t], reg.k(t)) for t in range(reg.T)]
        st = ModelState(reg, A, S, float(alpha), np.zeros(reg.T))
        for t in range(reg.T):
            if st.A[t].shape != (reg.k(t), reg.k(t)):
                raise ValueError(f"A[{t}] has shape {st.A[t].shape}, expected k = {reg.k(t)}")
            st.ll1[t] = self._ll1(st, t)
        self.state = st
        return st

    def set_scale(self, scale: float) -> None:
        """Set the annealing multiplier of the degrees of freedom."""
        self.dof_scale = float(scale)
        d = self.cfg.wishart_dof * (scale if self.cfg.anneal_wishart else 1.0)
        self.wp = cp.WishartParams(d, self.cfg.s, self.cfg.normalized)

    # -- pieces of the posterior --------------------------------------------
    def _ll1(self, st: ModelState, t: int, A=None, alpha=None) -> float:
        A = st.A[t] if A is None else A
        alpha = st.alpha if alpha is None else alpha
        nb = np.asarray(st.reg.counts[t], dtype=np.float64)
        return float(loglik_from_stats(st.S[t], nb, A, alpha, 1.0))

    def _logp_A(self, st: ModelState, t: int, A_t=None, order_t=None) -> float:
        """``log p(A_t | A_{t-1})`` (with optional replacement of ``A_t``)."""
        if self.fixed:
            return 0.0
        A_t = st.A[t] if A_t is None else A_t
        order_t = st.reg.order[t] if order_t is None else order_t
        if t == 0:
            return cp.log_transition_density(None, [], A_t, order_t, self.wp)
        return cp.log_transition_density(st.A[t - 1], st.reg.order[t - 1], A_t, order_t, self.wp)

    def _logp_A_next(self, st: ModelState, t: int, A_t=None, order_t=None) -> float:
        """``log p(A_{t+1} | A_t)``; zero at the last epoch."""
        if self.fixed or t + 1 >= st.T:
            return 0.0
        A_t = st.A[t] if A_t is None else A_t
        order_t = st.reg.order[t] if order_t is None else order_t
        return cp.log_transition_density(A_t, order_t, st.A[t + 1], st.reg.order[t + 1], self.wp)

    def _log_alpha_prior(self, alpha: float) -> float:
        r, th = self.cfg.alpha_shape, self.cfg.alpha_scale
        return (r - 1) * math.log(alpha) - alpha / th - r * math.log(th) - math.lgamma(r)

    def log_posterior(self, st: ModelState | None = None, dof_scale: float | None = None) -> float:
        """Incremental log posterior (cached likelihoods)."""
        if dof_scale is not None and dof_scale != self.dof_scale:
            keep = self.dof_scale
            self.set_scale(dof_scale)
            try:
                return self.log_posterior(st)
            finally:
                self.set_scale(keep)
        st = self.state if st is None else st
        sc = self.dof_scale
        out = st.reg.log_prior(self.params)
        out += float(np.sum(self.dof * sc * st.ll1))
        out += sum(self._logp_A(st, t) for t in range(st.T))
        if self.cfg.sample_alpha:
            out += self._log_alpha_prior(st.alpha)
        return out

    def log_posterior_reference(self, st: ModelState | None = None, dof_scale: float | None = None) -> float:
        """Same quantity recomputed from scratch via dense likelihood evaluation."""
        if dof_scale is not None and dof_scale != self.dof_scale:
            keep = self.dof_scale
            self.set_scale(dof_scale)
            try:
                return self.log_posterior_reference(st)
            finally:
                self.set_scale(keep)
        st = self.state if st is None else st
        sc = self.dof_scale
        reg = ChainRegistry(st.reg.labels)
        out = reg.log_prior(self.params)
        for t in range(st.T):
            # reorder A_t to the fresh registry's block order
            perm = [st.reg.index[t][c] for c in reg.order[t]]
            A = st.A[t][np.ix_(perm, perm)]
            cov = build_block_cov(reg.pos[t], A, st.alpha)
            out += loglik_tiw(self.data[t], cov, self.dof[t] * sc, method="reference")
        out += sum(self._logp_A(st, t) for t in range(st.T))
        if self.cfg.sample_alpha:
            out += self._log_alpha_prior(st.alpha)
        return out

    # -- moves ---------------------------------------------------------------
    def reassign_object(self, t: int, l: int) -> None:
        st, reg, rng = self.state, self.state.reg, self.rng
        D = self.data[t]
        k = reg.k(t)
        u = np.bincount(reg.pos[t], weights=D[l], minlength=k)
        i_old = int(reg.pos[t][l])
        S = st.S[t]
        S[i_old, :] -= u
        S[:, i_old] -= u
        _, _, emptied, pred_old, succ_old = reg.remove(t, l)
        A = st.A[t]
        old_row = None
        if emptied:
            keep = np.delete(np.arange(k), i_old)
            old_row = (A[i_old, keep].copy(), float(A[i_old, i_old]))
            A = A[np.ix_(keep, keep)]
            S = S[np.ix_(keep, keep)]
            u = u[keep]
            k -= 1
            st.A[t] = A
            st.S[t] = S
        nb = np.asarray(reg.counts[t], dtype=np.float64)
        pw = assignment_prior_logweights(reg, t, self.params)
        types, cross, diag, corr = self._new_candidates(
            st, t, A, pw, old_row, (pred_old, succ_old) if emptied else None
        )
        m = len(types)

        # one batch of (k+1)-block problems: existing blocks get an empty dummy block
        K1 = k + 1
        nc = k + m
        Sx = np.zeros((nc, K1, K1))
        Sx[:, :k, :k] = S
        nbx = np.zeros((nc, K1))
        nbx[:, :k] = nb
        Ax = np.zeros((nc, K1, K1))
        Ax[:, :k, :k] = A
        idx = np.arange(k)
        Sx[idx, idx, :k] += u
        Sx[idx, :k, idx] += u
        nbx[idx, idx] += 1.0
        Ax[:k, k, k] = 1.0
        if m:
            Sx[k:, :k, k] = u
            Sx[k:, k, :k] = u
            nbx[k:, k] = 1.0
            Ax[k:, :k, k] = cross
            Ax[k:, k, :k] = cross
            Ax[k:, k, k] = diag
        ll = loglik_from_stats(Sx, nbx, Ax, st.alpha, 1.0)
        prior = pw.existing
        if m:
            prior = np.concatenate([prior, np.array([pw.new[ty] for ty in types]) + corr])
        j = _sample_log(prior + self.dof[t] * self.dof_scale * ll, rng)

        if j < k:
            reg.assign_existing(t, l, j)
            S[j, :] += u
            S[:, j] += u
        else:
            p, s = types[j - k]
            reg.assign_new(t, l, p, s)
            st.A[t] = Ax[j]
            st.S[t] = Sx[j]
        st.ll1[t] = float(ll[j])

    def _new_candidates(self, st, t, A, pw, old_row, old_type):
        """Auxiliary rows for every new-block candidate.

        Returns ``(types, cross, diag, corr)``.  ``corr`` adds
        ``log p(A^+) - log p(A^-) - log q(row)`` over the two transition
        factors that change; for a fresh chain this is exactly zero and the
        fresh weight is split over ``m_aux`` copies instead.
        """
        k = A.shape[0]
        m = self.params.m_aux
        fresh = (None, None)
        types = []
        for ty, w in pw.new.items():
            if w > -INF:
                types.extend([ty] * (m if ty == fresh else 1))
        n = len(types)
        is_fresh = np.array([ty == fresh for ty in types], dtype=bool)
        corr = np.where(is_fresh, -math.log(m), 0.0)
        if self.fixed:
            return types, np.zeros((n, k)), np.full(n, float(self.cfg.fixed_A)), corr
        wp = self.wp
        nu = wp.dof - k
        if not n or not nu > 0:
            return [], np.zeros((0, k)), np.zeros(0), np.zeros(0)
        rng = self.rng
        fs = wp.factor() * wp.s
        z = rng.standard_normal((n, k))
        chi = rng.chisquare(nu, size=n)
        L = cp._chol(A) if k else np.zeros((0, 0))
        cross = math.sqrt(fs) * (z @ L.T)
        if old_row is not None and old_type in types:
            # the emptied block's own row is the current value of its auxiliary
            j = types.index(old_type)
            a, c = old_row
            cross[j] = a
            z[j] = np.linalg.solve(L, a) / math.sqrt(fs) if k else z[j]
            chi[j] = (c - fs * float(z[j] @ z[j])) / fs
        zz = np.sum(z * z, axis=1)
        diag = fs * (zz + chi)
        linked = np.flatnonzero(~is_fresh)
        if linked.size == 0:
            return types, cross, diag, corr

        reg = st.reg
        order = reg.order[t]
        logdet_A = 2.0 * float(np.sum(np.log(np.diag(L)))) if k else 0.0
        schur = fs * chi[linked]
        log_q = (
            -0.5 * k * math.log(2 * math.pi * fs)
            - 0.5 * logdet_A
            - 0.5 * zz[linked]
            + (0.5 * nu - 1) * np.log(schur)
            - schur / (2 * fs)
            - 0.5 * nu * math.log(2 * fs)
            - math.lgamma(0.5 * nu)
        )
        Aplus = np.empty((linked.size, k + 1, k + 1))
        Aplus[:, :k, :k] = A
        Aplus[:, :k, k] = cross[linked]
        Aplus[:, k, :k] = cross[linked]
        Aplus[:, k, k] = diag[linked]
        with_p = [i for i, j in enumerate(linked) if types[j][0] is not None]
        if with_p:
            # predecessor link: the new row survives from t-1 instead of being born
            base = self._logp_A(st, t, A, order)
            Psi = np.stack(
                [
                    cp.transition_scale(st.A[t - 1], reg.order[t - 1], order + [types[linked[i]][0]], wp)
                    for i in with_p
                ]
            )
            lp = cp.wishart_logpdf_batch(Aplus[with_p], wp.dof, Psi)
            corr[linked[with_p]] += lp - base - log_q[with_p]
        with_s = [i for i, j in enumerate(linked) if types[j][1] is not None]
        if with_s:
            # successor link: the chain at t+1 now survives from t
            base = self._logp_A_next(st, t, A, order)
            nxt = reg.order[t + 1]
            Psi = []
            for i in with_s:
                p, s = types[linked[i]]
                cid = p if p is not None else s
                ren = [c if c != s else cid for c in nxt]
                Psi.append(cp.transition_scale(Aplus[i], order + [cid], ren, wp))
            lp = cp.wishart_logpdf_batch(st.A[t + 1], wp.dof, np.stack(Psi))
            corr[linked[with_s]] += lp - base
        return types, cross, diag, corr

    def mh_update_A(self, t: int) -> int:
        """Metropolis-Hastings moves on ``A_t``; returns the number accepted."""
        if self.fixed:
            return 0
        st = self.state
        nu = self.cfg.mh_dof
        dof = self.dof[t] * self.dof_scale
        acc = 0
        cur = dof * st.ll1[t] + self._logp_A(st, t) + self._logp_A_next(st, t)
        for _ in range(self.cfg.mh_steps):
            A_old = st.A[t]
            try:
                A_new = cp.propose(A_old, nu, self.rng)
                ll_new = self._ll1(st, t, A=A_new)
                new = dof * ll_new + self._logp_A(st, t, A_new) + self._logp_A_next(st, t, A_new)
                log_r = new - cur + cp.log_proposal_density(A_old, A_new, nu) - cp.log_proposal_density(
                    A_new, A_old, nu
                )
            except np.linalg.LinAlgError:
                continue
            if math.log(self.rng.random()) < log_r:
                st.A[t] = A_new
                st.ll1[t] = ll_new
                cur = new
                acc += 1
        return acc

    def mh_log_ratio(self, t: int, A_old, A_new) -> float:
        """Log Hastings ratio of the move ``A_old -> A_new`` at epoch ``t``."""
        st = self.state
        nu = self.cfg.mh_dof
        dof = self.dof[t] * self.dof_scale

        def target(A):
            return dof * self._ll1(st, t, A=A) + self._logp_A(st, t, A) + self._logp_A_next(st, t, A)

        q = cp.log_proposal_density(A_old, A_new, nu) - cp.log_proposal_density(A_new, A_old, nu)
        return target(A_new) - target(A_old) + q

    def update_alpha(self) -> bool:
        cfg = self.cfg
        st = self.state
        if not cfg.sample_alpha or cfg.alpha_step <= 0:
            return False
        a_old = st.alpha
        a_new = a_old * math.exp(cfg.alpha_step * self.rng.standard_normal())
        ll_new = np.array([self._ll1(st, t, alpha=a_new) for t in range(st.T)])
        w = self.dof * self.dof_scale
        log_r = (
            float(np.sum(w * (ll_new - st.ll1)))
            + self._log_alpha_prior(a_new)
            - self._log_alpha_prior(a_old)
            + math.log(a_new) - math.log(a_old)
        )
        if math.log(self.rng.random()) < log_r:
            st.alpha = a_new
            st.ll1 = ll_new
            return True
        return False

    def gibbs_sweep(self) -> np.ndarray:
        st = self.state
        for t in range(st.T):
            for l in range(st.reg.n(t)):
                self.reassign_object(t, l)
        acc = np.zeros(st.T)
        for t in range(st.T):
            if self.cfg.mh_steps:
                acc[t] = self.mh_update_A(t) / self.cfg.mh_steps
        self.update_alpha()
        st.sweep += 1
        if self.cfg.debug:
            self.check_state()
            if st.sweep % self.cfg.check_every == 0:
                a, b = self.log_posterior(), self.log_posterior_reference()
                if not abs(a - b) <= 1e-6 * max(1.0, abs(b)):
                    raise RuntimeError(f"incremental log posterior {a} != reference {b}")
        return acc

    def check_state(self) -> None:
        st = self.state
        st.reg.validate()
        for t in range(st.T):
            k = st.reg.k(t)
            assert st.A[t].shape == (k, k), "A_t dimension differs from block count"
            assert st.S[t].shape == (k, k)
            assert min(st.reg.counts[t]) > 0, "empty block"
            assert cp.is_spd(st.A[t]), "A_t not SPD"
            S_ref = block_sums(self.data[t], st.reg.pos[t], k)
            assert np.allclose(st.S[t], S_ref, rtol=1e-9, atol=1e-9 * max(1.0, np.abs(S_ref).max()))
            assert abs(st.ll1[t] - self._ll1(st, t)) <= 1e-8 * max(1.0, abs(st.ll1[t]))


def initial_alpha(data: DistanceSeries) -> float:
    """Half the median nearest-neighbour distance, pooled over epochs.

    Within a block ``E[D_ij] = 2 alpha``; nearest neighbours are almost always
    block mates, so this start does not absorb between-cluster spread.
    """
    nn = []
    for D in data.matrices:
        if D.shape[0] > 1:
            M = D + np.diag(np.full(D.shape[0], np.inf))
            nn.append(M.min(axis=1))
    if not nn:
        return 1.0
    a = float(np.median(np.concatenate(nn))) / 2.0
    return a if a > 0 else 1.0


def _sample_log(logw: np.ndarray, rng: np.random.Generator) -> int:
    mx = np.max(logw)
    if not np.isfinite(mx):
        raise RuntimeError("no candidate with finite weight")
    c = np.cumsum(np.exp(logw - mx))
    j = int(np.searchsorted(c, rng.random() * c[-1], side="right"))
    return min(j, len(c) - 1)


@dataclass
class FitResult:
    trace: Trace
    state: ModelState
    converged: bool
    log_post: float
    sampler: Sampler = field(repr=False, default=None)


def run_with_annealing(data, config: SamplerConfig, rng: np.random.Generator, progress=None) -> FitResult:
    """Burn-in, sampling, then annealing of the likelihood dof until the partition freezes.

    With ``anneal_gamma == 1`` no annealing happens and the sampled state with
    the highest log posterior is returned.
    """
    smp = Sampler(data, config, rng)
    st = smp.init_state()
    trace = Trace()
    best, best_lp = None, -INF

    def record(phase, acc, t0):
        lp = smp.log_posterior()
        trace.append(
            sweep=smp.state.sweep,
            phase=phase,
            log_post=lp,
            alpha=smp.state.alpha,
            dof_scale=smp.dof_scale,
            k=smp.state.ks(),
            acc=acc,
            runtime_s=(time.perf_counter() - t0) if config.record_timing else None,
        )
        return lp

    for i in range(config.sweeps):
        t0 = time.perf_counter()
        acc = smp.gibbs_sweep()
        phase = "burnin" if i < config.burn_in else "sample"
        lp = record(phase, acc, t0)
        if phase == "sample" and lp > best_lp:
            best, best_lp = smp.state.copy(), lp
        if progress:
            progress(i, phase, lp)

    if config.anneal_gamma == 1.0 or config.anneal_max == 0:
        if best is None:
            best, best_lp = smp.state.copy(), smp.log_posterior()
        smp.state = best
        return FitResult(trace, best, True, best_lp, smp)

    prev = smp.state.partitions()
    stable = 0
    converged = False
    for i in range(config.anneal_max):
        t0 = time.perf_counter()
        smp.set_scale(smp.dof_scale * config.anneal_gamma)
        acc = smp.gibbs_sweep()
        record("anneal", acc, t0)
        lp_base = smp.log_posterior(dof_scale=1.0)
        if lp_base > best_lp:
            best, best_lp = smp.state.copy(), lp_base
        cur = smp.state.partitions()
        same = all(np.array_equal(a, b) for a, b in zip(prev, cur))
        stable = stable + 1 if same else 0
        prev = cur
        if progress:
            progress(config.sweeps + i, "anneal", lp_base)
        if stable >= config.anneal_patience:
            converged = True
            break
    smp.set_scale(1.0)
    if converged:
        final = smp.state
        return FitResult(trace, final, True, smp.log_posterior(final), smp)
    logger.warning("annealing did not freeze the partition; returning the best state")
    if best is None:
        best = smp.state
    smp.state = best
    return FitResult(trace, best, False, smp.log_posterior(best), smp)


def fit(data, config: SamplerConfig | None = None, seed: int = 0) -> FitResult:
    """Convenience wrapper: ``run_with_annealing`` with a fresh seeded generator."""
    return run_with_annealing(data, config or SamplerConfig(), np.random.default_rng(seed))


__all__ = [
    "SamplerConfig",
    "ModelState",
    "Trace",
    "Sampler",
    "FitResult",
    "run_with_annealing",
    "fit",
    "canonical",
    "initial_alpha",
]
