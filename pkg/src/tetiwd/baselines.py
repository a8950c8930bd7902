"""Comparison methods: static TiWD, hierarchical linkage, pooled TiWD and Te-Gauss.

Te-Gauss clusters the kernel-PCA embedding with the same temporal partition
prior as Te-TiWD but a Gaussian likelihood: every block has its own mean and a
spherical variance with a conjugate normal-inverse-gamma prior, integrated
out, so reassignment needs no auxiliary parameters.
"""

from __future__ import annotations

import logging
import math
from dataclasses import asdict, dataclass, fields

import numpy as np
from scipy.cluster.hierarchy import cut_tree, linkage
from scipy.spatial.distance import squareform
from scipy.special import gammaln

from .distance import DistanceSeries, check_distance_matrix
from .prior import INF, ChainRegistry, PriorParams, assignment_prior_logweights
from .sampler import SamplerConfig, _sample_log, canonical, run_with_annealing
from .tracking import embed_overall

logger = logging.getLogger(__name__)

LINKAGES = ("ward", "complete", "single")


def run_static_tiwd(D, config: SamplerConfig, rng: np.random.Generator) -> np.ndarray:
    """Te-TiWD on a single epoch; the temporal factors vanish."""
    res = run_with_annealing(DistanceSeries((np.asarray(D, dtype=np.float64),)), config, rng)
    return canonical(res.state.reg.labels[0])


def run_linkage(D, method: str, k: int) -> np.ndarray:
    """Agglomerative clustering on Euclidean distances ``sqrt(D)``, cut to ``k`` blocks."""
    if method not in LINKAGES:
        raise ValueError(f"unknown linkage {method!r}; choose from {LINKAGES}")
    D = check_distance_matrix(D)
    n = D.shape[0]
    if not 1 <= k <= n:
        raise ValueError(f"k must be in [1, {n}], got {k}")
    if n == 1:
        return np.zeros(1, dtype=np.int64)
    Z = linkage(squareform(np.sqrt(D), checks=False), method=method)
    return canonical(cut_tree(Z, n_clusters=k).ravel())


def run_pooled(D_star, sizes, config: SamplerConfig, rng: np.random.Generator) -> list[np.ndarray]:
    """Static TiWD over all objects of all epochs, split back per epoch."""
    if D_star is None:
        raise ValueError("pooled clustering needs cross-epoch distances")
    D_star = np.asarray(D_star, dtype=np.float64)
    if D_star.shape[0] != sum(sizes):
        raise ValueError(f"D* has {D_star.shape[0]} rows, epochs hold {sum(sizes)} objects")
    dof = config.dof
    if isinstance(dof, (list, tuple)):
        dof = float(np.mean(dof))
    cfg = SamplerConfig.from_dict({**config.to_dict(), "dof": dof})
    lab = run_static_tiwd(D_star, cfg, rng)
    cuts = np.cumsum([0, *sizes])
    return [canonical(lab[a:b]) for a, b in zip(cuts[:-1], cuts[1:])]


@dataclass
class GaussConfig:
    sweeps: int = 500
    burn_in: int = 250
    xi: float = 1.0
    k: float = INF
    kappa0: float = 1.0
    a0: float = 1.0
    b0: float | None = None  # None: a0 times the average per-coordinate variance
    rank: int | None = None  # None: axes with above-average eigenvalue

    @classmethod
    def from_dict(cls, d: dict) -> "GaussConfig":
        extra = set(d) - {f.name for f in fields(cls)}
        if extra:
            raise ValueError(f"unknown Te-Gauss keys: {sorted(extra)}")
        d = dict(d)
        if d.get("k") in ("inf", None):
            d["k"] = INF
        return cls(**d)

    def to_dict(self) -> dict:
        d = asdict(self)
        if d["k"] == INF:
            d["k"] = "inf"
        return d


class _NIG:
    """Log marginal likelihood of a block under the spherical normal-inverse-gamma prior."""

    def __init__(self, m0, kappa0, a0, b0):
        self.m0 = m0
        self.r = m0.size
        self.k0 = kappa0
        self.a0 = a0
        self.b0 = b0
        self.m0sq = float(m0 @ m0)
        self.const = a0 * math.log(b0) - math.lgamma(a0)

    def logml(self, n, s, ss):
        """``n`` counts, ``s`` sums (..., r), ``ss`` sums of squared norms; vectorised."""
        n = np.asarray(n, dtype=np.float64)
        kn = self.k0 + n
        mn_num = self.k0 * self.m0 + s
        an = self.a0 + 0.5 * n * self.r
        bn = self.b0 + 0.5 * (ss + self.k0 * self.m0sq - np.sum(mn_num * mn_num, axis=-1) / kn)
        return (
            0.5 * self.r * (math.log(self.k0) - np.log(kn))
            + self.const
            - an * np.log(bn)
            + gammaln(an)
            - 0.5 * n * self.r * math.log(2 * math.pi)
        )


class GaussSampler:
    """Collapsed Gibbs sampler of the dynamic spherical Gaussian mixture."""

    def __init__(self, X: list, config: GaussConfig, rng: np.random.Generator):
        self.X = [np.asarray(x, dtype=np.float64) for x in X]
        self.cfg = config
        self.rng = rng
        self.params = PriorParams(config.xi, config.k)
        allx = np.vstack(self.X)
        m0 = allx.mean(axis=0)
        b0 = config.b0
        if b0 is None:
            b0 = config.a0 * max(float(np.mean(np.var(allx, axis=0))), 1e-12)
        self.nig = _NIG(m0, config.kappa0, config.a0, b0)
        self.sq = [np.sum(x * x, axis=1) for x in self.X]
        self.reg = ChainRegistry([np.zeros(len(x), dtype=np.int64) for x in self.X])
        self.n = [[len(x)] for x in self.X]
        self.s = [[x.sum(axis=0)] for x in self.X]
        self.ss = [[float(q.sum())] for q in self.sq]

    def log_posterior(self) -> float:
        lp = self.reg.log_prior(self.params)
        for t in range(len(self.X)):
            lp += float(np.sum(self.nig.logml(np.array(self.n[t]), np.array(self.s[t]), np.array(self.ss[t]))))
        return lp

    def reassign(self, t: int, l: int) -> None:
        reg, x, q = self.reg, self.X[t][l], self.sq[t][l]
        i = int(reg.pos[t][l])
        self.n[t][i] -= 1
        self.s[t][i] = self.s[t][i] - x
        self.ss[t][i] -= q
        _, _, emptied, _, _ = reg.remove(t, l)
        if emptied:
            for arr in (self.n[t], self.s[t], self.ss[t]):
                arr.pop(i)
        pw = assignment_prior_logweights(reg, t, self.params)
        n = np.array(self.n[t], dtype=np.float64)
        k = n.size
        if k:
            s = np.array(self.s[t])
            ss = np.array(self.ss[t])
            ll = self.nig.logml(n + 1, s + x, ss + q) - self.nig.logml(n, s, ss)
        else:
            ll = np.zeros(0)
        ll_new = float(self.nig.logml(1.0, x, q))
        types = [ty for ty, w in pw.new.items() if w > -INF]
        logw = np.concatenate([pw.existing + ll, np.array([pw.new[ty] for ty in types]) + ll_new])
        j = _sample_log(logw, self.rng)
        if j < k:
            reg.assign_existing(t, l, j)
            self.n[t][j] += 1
            self.s[t][j] = self.s[t][j] + x
            self.ss[t][j] += q
        else:
            reg.assign_new(t, l, *types[j - k])
            self.n[t].append(1)
            self.s[t].append(x.copy())
            self.ss[t].append(float(q))

    def sweep(self) -> None:
        for t in range(len(self.X)):
            for l in range(len(self.X[t])):
                self.reassign(t, l)

    def run(self) -> list[np.ndarray]:
        """Burn-in then sampling; returns the sampled partitions with the highest posterior."""
        best, best_lp = None, -INF
        for i in range(self.cfg.sweeps):
            self.sweep()
            if i >= self.cfg.burn_in or best is None:
                lp = self.log_posterior()
                if lp > best_lp:
                    best, best_lp = [lab.copy() for lab in self.reg.labels], lp
        return [canonical(lab) for lab in best]


def _truncate(X, eigvals, rank):
    # a spherical model fits the leading axes; the long tail of small noise
    # axes has very uneven variances
    if rank is None:
        rank = max(1, int(np.sum(eigvals > eigvals.mean()))) if eigvals.size else 0
    return X[:, :rank]


def te_gauss_inputs(data: DistanceSeries, rank: int | None = None) -> list[np.ndarray]:
    """Per-epoch embedded rows, from ``D*`` if present, else per-epoch embeddings."""
    if data.cross is not None:
        emb = embed_overall(data.cross, None, data.sizes)
        X = _truncate(emb.X, emb.eigvals, rank)
        return [X[emb.offsets[t] : emb.offsets[t + 1]] for t in range(data.T)]
    logger.warning("no cross-epoch distances; Te-Gauss embeds every epoch separately")
    out = []
    for D in data.matrices:
        emb = embed_overall(D)
        out.append(_truncate(emb.X, emb.eigvals, rank))
    # per-epoch ranks differ; the sampler needs one coordinate count
    r = max(X.shape[1] for X in out)
    return [np.pad(X, ((0, 0), (0, r - X.shape[1]))) for X in out]


def run_te_gauss(data: DistanceSeries, config: GaussConfig, rng: np.random.Generator) -> list[np.ndarray]:
    X = te_gauss_inputs(data, config.rank)
    return GaussSampler(X, config, rng).run()
