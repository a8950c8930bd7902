"""Synthetic series: draws from the generative model and drifting Gaussian clusters.

Both generators return a :class:`~tetiwd.distance.DistanceSeries` with
per-epoch matrices ``D_t`` built from ``K_t = X_t X_t^T / d_t`` and a
cross-epoch matrix ``D*`` from the stacked latent vectors (zero padded to the
largest latent dimension).
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field, fields

import numpy as np

from . import covprior as cp
from .distance import DistanceSeries, sq_distances


@dataclass
class ExperimentConfig:
    T: int = 5
    n: object = 20  # int or per-epoch list
    dim: object = 100  # latent dimension d_t, int or per-epoch list
    clusters: int = 3
    alpha: float = 2.0
    wishart_dof: float = 20.0
    xi: float = 1.0
    generator: str = "model"  # model | drift
    min_size: int = 2  # smallest block in the first epoch
    spread: float = 1.0  # drift generator: within-cluster sd per coordinate
    center_scale: float = 0.25  # drift generator: sd of initial centre coordinates
    drift: float = 0.25  # drift generator: sd of centre relocations per epoch
    size_concentration: float = 10.0  # drift generator: Dirichlet weight for the first split
    seed: int = 0
    repeats: int = 5
    sweeps: int = 500
    burn_in: int = 250
    anneal_gamma: float = 1.05  # passed to the sampler; 1 keeps the best sampled state

    def __post_init__(self):
        if self.T < 1 or self.clusters < 1 or self.repeats < 1:
            raise ValueError("T, clusters and repeats must be >= 1")
        if not self.alpha > 0 or not self.wishart_dof > 0 or not self.xi > 0:
            raise ValueError("alpha, wishart_dof and xi must be positive")
        if self.generator not in ("model", "drift"):
            raise ValueError(f"unknown generator {self.generator!r}")
        if min(self.sizes) < 1 or min(self.dims) < 1:
            raise ValueError("n and dim must be positive")
        if self.clusters * self.min_size > self.sizes[0]:
            raise ValueError("first epoch too small for the requested clusters")
        if self.anneal_gamma < 1:
            raise ValueError("anneal_gamma must be >= 1")
        if min(self.spread, self.center_scale, self.drift) < 0:
            raise ValueError("scales must be nonnegative")

    @property
    def sizes(self) -> list[int]:
        return _per_epoch(self.n, self.T)

    @property
    def dims(self) -> list[int]:
        return _per_epoch(self.dim, self.T)

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        known = {f.name for f in fields(cls)}
        extra = set(d) - known
        if extra:
            raise ValueError(f"unknown experiment keys: {sorted(extra)}")
        return cls(**d)

    def to_dict(self) -> dict:
        return asdict(self)


def _per_epoch(v, T) -> list[int]:
    if isinstance(v, (list, tuple)):
        if len(v) != T:
            raise ValueError(f"expected {T} per-epoch values, got {len(v)}")
        return [int(x) for x in v]
    return [int(v)] * T


PRESETS = {
    "well_separated": dict(T=5, n=20, dim=100, clusters=3, alpha=2.0, wishart_dof=100.0),
    "overlapping": dict(T=5, n=200, dim=40, clusters=5, alpha=3.0, wishart_dof=100.0, anneal_gamma=1.0),
    "overlapping_desk": dict(
        T=5, n=50, dim=40, clusters=5, alpha=3.0, wishart_dof=100.0, anneal_gamma=1.0, sweeps=300, burn_in=150
    ),
    "drift": dict(
        T=5, n=200, dim=40, clusters=5, generator="drift", center_scale=0.3, drift=0.3,
        wishart_dof=100.0, anneal_gamma=1.0,
    ),
    "drift_desk": dict(
        T=5, n=50, dim=40, clusters=5, generator="drift", center_scale=0.3, drift=0.3,
        wishart_dof=100.0, anneal_gamma=1.0, sweeps=300, burn_in=150,
    ),
}


def preset(name: str, **overrides) -> ExperimentConfig:
    if name not in PRESETS:
        raise ValueError(f"unknown preset {name!r}; choose from {sorted(PRESETS)}")
    return ExperimentConfig(**{**PRESETS[name], **overrides})


@dataclass
class SyntheticTruth:
    labels: list  # per-epoch chain IDs
    A: list
    alpha: float
    X: list  # latent n_t x d_t matrices
    kind: str
    centers: list = field(default_factory=list)

    def to_json(self) -> dict:
        out = {
            "kind": self.kind,
            "alpha": float(self.alpha),
            "labels": [[int(c) for c in lab] for lab in self.labels],
            "latent_dims": [int(x.shape[1]) for x in self.X],
        }
        if self.A:
            out["A"] = [np.asarray(a).tolist() for a in self.A]
        return out


def first_partition(n: int, k: int, rng, min_size: int = 1) -> np.ndarray:
    """Uniform labels over ``k`` blocks, redrawn until every block has ``min_size`` members."""
    while True:
        lab = rng.integers(0, k, size=n)
        if np.bincount(lab, minlength=k).min() >= min_size:
            return lab


def conditional_partition(prev_labels, n: int, k: int, xi: float, rng, next_id: int):
    """Draw epoch-``t`` labels from the finite-``k`` conditional prior by sequential seating.

    Chain ``j`` of the previous epoch (size ``p_j``) receives the next object
    with weight ``xi/k + p_j + n_j``; each of the remaining free slots with
    weight ``xi/k + n_j``.  Returns ``(labels, next_id)``.
    """
    ids, p = np.unique(prev_labels, return_counts=True)
    chains = [int(c) for c in ids]
    w0 = xi / k
    base = list(w0 + p.astype(float))
    cnt = [0] * len(chains)
    free = k - len(chains)
    lab = np.empty(n, dtype=np.int64)
    for i in range(n):
        w = np.array(base) + np.array(cnt, dtype=float)
        tot_new = free * w0
        r = rng.random() * (w.sum() + tot_new)
        c = np.searchsorted(np.cumsum(w), r, side="right")
        if c < len(chains):
            cnt[c] += 1
            lab[i] = chains[c]
        else:
            chains.append(next_id)
            base.append(w0)
            cnt.append(1)
            free -= 1
            lab[i] = next_id
            next_id += 1
    return lab, next_id


def _order(lab) -> list[int]:
    return [int(c) for c in np.unique(lab)]


def gen_model_data(cfg: ExperimentConfig, rng: np.random.Generator):
    """Series drawn from the generative model.

    Chain centroids keep their whitened coordinates across epochs, so a
    surviving chain stays in place while ``A_t`` stays close to ``A_{t-1}``;
    each epoch's marginal law is exactly the model's.
    """
    wp = cp.WishartParams(cfg.wishart_dof)
    sizes, dims = cfg.sizes, cfg.dims
    dmax = max(dims)
    k = cfg.clusters
    labels, As, Xs = [], [], []
    lab = first_partition(sizes[0], k, rng, cfg.min_size)
    next_id = k
    order_prev, A_prev, cent_prev = None, None, {}
    for t in range(cfg.T):
        if t > 0:
            lab, next_id = conditional_partition(labels[-1], sizes[t], k, cfg.xi, rng, next_id)
        order = _order(lab)
        A = cp.sample_A_transition(A_prev, order_prev or [], order, wp, rng)
        # reuse whitened centroid coordinates of survivors, fresh ones for births
        surv = [c for c in order if c in cent_prev]
        if surv:
            ix_prev = [order_prev.index(c) for c in surv]
            L_prev = np.linalg.cholesky(A_prev[np.ix_(ix_prev, ix_prev)])
            C_prev = np.stack([cent_prev[c] for c in surv])
            E_s = np.linalg.solve(L_prev, C_prev)
        else:
            E_s = np.zeros((0, dmax))
        born = [c for c in order if c not in cent_prev]
        E = np.vstack([E_s, rng.standard_normal((len(born), dmax))])
        perm = [order.index(c) for c in surv + born]
        L = np.linalg.cholesky(A[np.ix_(perm, perm)])
        C = L @ E
        cent_prev = {c: C[i] for i, c in enumerate(surv + born)}
        pos = np.array([order.index(c) for c in lab])
        C_now = np.stack([cent_prev[c] for c in order])
        X = C_now[pos, : dims[t]] + np.sqrt(cfg.alpha) * rng.standard_normal((sizes[t], dims[t]))
        labels.append(lab)
        As.append(A)
        Xs.append(X)
        order_prev, A_prev = order, A
    return _emit(Xs, dims), SyntheticTruth(labels, As, cfg.alpha, Xs, "model")


def gen_drift_data(cfg: ExperimentConfig, rng: np.random.Generator):
    """Drifting spherical Gaussian clusters, independent of the model's assumptions."""
    sizes, dims = cfg.sizes, cfg.dims
    dmax = max(dims)
    k = cfg.clusters
    w = rng.dirichlet(np.full(k, cfg.size_concentration))
    counts = rng.multinomial(sizes[0], w)
    centers = cfg.center_scale * rng.standard_normal((k, dmax))
    labels, Xs, cents = [], [], []
    for t in range(cfg.T):
        if t > 0:
            counts = _polya(counts, sizes[t], cfg.xi / k, rng)
            centers = centers + cfg.drift * rng.standard_normal((k, dmax))
        lab = rng.permutation(np.repeat(np.arange(k), counts))
        X = centers[lab, : dims[t]] + cfg.spread * rng.standard_normal((sizes[t], dims[t]))
        labels.append(lab)
        Xs.append(X)
        cents.append(centers[:, : dims[t]].copy())
    return _emit(Xs, dims), SyntheticTruth(labels, [], cfg.spread**2, Xs, "drift", cents)


def _polya(prev_counts, n: int, a: float, rng) -> np.ndarray:
    """Dirichlet-Multinomial counts with parameters ``a + prev_counts``."""
    return rng.multinomial(n, rng.dirichlet(a + np.asarray(prev_counts, dtype=float)))


def _emit(Xs, dims) -> DistanceSeries:
    dmax = max(dims)
    scaled = [X / np.sqrt(d) for X, d in zip(Xs, dims)]
    mats = tuple(sq_distances(Y) for Y in scaled)
    pad = np.vstack([np.pad(Y, ((0, 0), (0, dmax - Y.shape[1]))) for Y in scaled])
    return DistanceSeries(mats, sq_distances(pad))


def generate(cfg: ExperimentConfig, rng: np.random.Generator):
    if cfg.generator == "model":
        return gen_model_data(cfg, rng)
    return gen_drift_data(cfg, rng)


def oracle_accuracy(truth: SyntheticTruth) -> float:
    """Accuracy of the Bayes classifier that knows the drift generator's centres."""
    if truth.kind != "drift":
        raise ValueError("oracle classifier needs the drift generator's centres")
    hits = tot = 0
    for lab, X, C in zip(truth.labels, truth.X, truth.centers):
        prop = np.bincount(lab, minlength=C.shape[0]) / len(lab)
        with np.errstate(divide="ignore"):
            score = -((X[:, None, :] - C[None]) ** 2).sum(-1) / (2 * truth.alpha) + np.log(prop)
        hits += int(np.sum(np.argmax(score, axis=1) == lab))
        tot += len(lab)
    return hits / tot
