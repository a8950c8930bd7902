"""Chain summaries and the kernel-PCA embedding of the cross-epoch distances."""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .distance import _center, check_distance_matrix

logger = logging.getLogger(__name__)

RANK_RTOL = 1e-9


@dataclass(frozen=True)
class OverallEmbedding:
    X: np.ndarray  # N x r coordinates
    eigvals: np.ndarray  # nonincreasing
    offsets: np.ndarray  # row of the first object of each epoch, plus N

    @property
    def N(self) -> int:
        return self.X.shape[0]

    @property
    def rank(self) -> int:
        return self.X.shape[1]

    def rows(self, t: int) -> np.ndarray:
        return self.X[self.offsets[t] : self.offsets[t + 1]]

    def global_index(self, t: int, i: int) -> int:
        return int(self.offsets[t] + i)


def embed_overall(D_star, rank: int | None = None, sizes=None) -> OverallEmbedding:
    """Classical scaling of ``D*``: ``X = V Lambda^{1/2}`` from ``-Q D* Q / 2``.

    ``rank=None`` keeps every eigenvalue above ``1e-9 * lambda_max``; a larger
    requested rank than the numerical one is truncated with a warning.
    """
    D = check_distance_matrix(D_star, name="D*")
    N = D.shape[0]
    Kc = -0.5 * _center(D)
    evals, V = np.linalg.eigh(0.5 * (Kc + Kc.T))
    evals, V = evals[::-1], V[:, ::-1]
    top = max(float(evals[0]), 0.0) if N else 0.0
    num_rank = int(np.sum(evals > RANK_RTOL * top)) if top > 0 else 0
    if rank is None:
        rank = num_rank
    elif rank > num_rank:
        logger.warning("requested rank %d exceeds numerical rank %d; truncating", rank, num_rank)
        rank = num_rank
    lam = evals[:rank]
    X = V[:, :rank] * np.sqrt(lam)
    if sizes is None:
        sizes = [N]
    offsets = np.concatenate([[0], np.cumsum(sizes)]).astype(np.int64)
    if offsets[-1] != N:
        raise ValueError(f"epoch sizes sum to {offsets[-1]}, D* has {N} rows")
    return OverallEmbedding(X, lam, offsets)


def chain_centroids(emb: OverallEmbedding, labels: list) -> dict:
    """Mean embedded row of every (chain, epoch) incarnation."""
    out = {}
    for t, lab in enumerate(labels):
        lab = np.asarray(lab)
        X = emb.rows(t)
        if X.shape[0] != lab.size:
            raise ValueError(f"epoch {t}: {lab.size} labels for {X.shape[0]} embedded rows")
        for c in np.unique(lab):
            out[(int(c), t)] = X[lab == c].mean(axis=0)
    return out


def chain_table(labels: list) -> list[dict]:
    """One row per chain: sizes per epoch (0 when absent), first and last epoch (1-based)."""
    T = len(labels)
    sizes: dict[int, list[int]] = {}
    for t, lab in enumerate(labels):
        ids, cnt = np.unique(np.asarray(lab), return_counts=True)
        for c, m in zip(ids, cnt):
            sizes.setdefault(int(c), [0] * T)[t] = int(m)
    rows = []
    for c in sorted(sizes, key=lambda c: (next(i for i, m in enumerate(sizes[c]) if m), c)):
        present = [t for t, m in enumerate(sizes[c]) if m]
        rows.append({"chain": c, "sizes": sizes[c], "birth": present[0] + 1, "death": present[-1] + 1})
    return rows


def chain_table_csv(rows: list[dict], T: int) -> str:
    head = ["chain"] + [f"size_{t + 1}" for t in range(T)] + ["birth", "death"]
    lines = [",".join(head)]
    for r in rows:
        lines.append(",".join(str(v) for v in [r["chain"], *r["sizes"], r["birth"], r["death"]]))
    return "\n".join(lines) + "\n"


def trajectory_csv(centroids: dict, dims: int = 2) -> str:
    """Long-format centroid coordinates (first ``dims`` axes) for plotting; epochs 1-based."""
    head = ["chain", "t"] + [f"x{j}" for j in range(dims)]
    lines = [",".join(head)]
    for (c, t) in sorted(centroids, key=lambda ct: (ct[0], ct[1])):
        v = centroids[(c, t)]
        coords = [repr(float(v[j])) if j < v.size else "0.0" for j in range(dims)]
        lines.append(",".join([str(c), str(t + 1)] + coords))
    return "\n".join(lines) + "\n"


def centroids_json(centroids: dict) -> dict:
    out: dict = {}
    for (c, t), v in sorted(centroids.items()):
        out.setdefault(str(c), {})[str(t + 1)] = [float(x) for x in v]
    return out
