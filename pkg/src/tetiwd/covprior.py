"""Wishart prior chain over the between-cluster covariances ``A_t``.

``W_d(V)`` is parameterised by its mean: with ``normalized=True`` (default)
the Wishart scale is ``V/d`` so that ``E[A] = V``; ``normalized=False`` uses
scale ``V`` (mean ``d*V``).

Dimension changes between epochs:

* chains that die are deleted from ``A_{t-1}`` before the draw,
* chains that are born get rows appended one at a time::

      A_12 | A_11 ~ N(0, f*s*A_11),    A_22.1 ~ W_1(d - k, f*s),
      A_22 = A_22.1 + A_21 A_11^{-1} A_12

  where ``k`` is the current size of ``A_11`` and ``f`` is ``1/d`` (or 1).
  This is the conditional law of ``W_{k+1}(d, f * blockdiag(., s))`` given its
  leading block, so appending in any order gives the same joint density.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import multigammaln

JITTER = 1e-10


@dataclass(frozen=True)
class WishartParams:
    dof: float
    s: float = 1.0
    normalized: bool = True

    def factor(self, dof: float | None = None) -> float:
        d = self.dof if dof is None else dof
        return 1.0 / d if self.normalized else 1.0


def _chol(A: np.ndarray) -> np.ndarray:
    try:
        return np.linalg.cholesky(A)
    except np.linalg.LinAlgError:
        k = A.shape[0]
        return np.linalg.cholesky(A + JITTER * max(1.0, np.trace(A) / max(k, 1)) * np.eye(k))


def is_spd(A) -> bool:
    A = np.asarray(A)
    if A.shape[0] == 0:
        return True
    try:
        np.linalg.cholesky(A)
        return True
    except np.linalg.LinAlgError:
        return False


def bartlett(dof: float, scale: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """One draw from the Wishart with ``dof`` degrees of freedom and scale matrix ``scale``."""
    p = scale.shape[0]
    if p == 0:
        return np.zeros((0, 0))
    if not dof > p - 1:
        raise ValueError(f"Wishart dof {dof} too small for dimension {p}")
    L = _chol(scale)
    B = np.zeros((p, p))
    B[np.diag_indices(p)] = np.sqrt(rng.chisquare(dof - np.arange(p)))
    il = np.tril_indices(p, -1)
    B[il] = rng.standard_normal(len(il[0]))
    LB = L @ B
    X = LB @ LB.T
    return 0.5 * (X + X.T)


def wishart_logpdf(X, dof: float, scale) -> float:
    """Log density of ``X`` under the Wishart(dof, scale) law (full normalisation)."""
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    scale = np.atleast_2d(np.asarray(scale, dtype=np.float64))
    p = X.shape[0]
    if p == 0:
        return 0.0
    Lx = np.linalg.cholesky(X)
    Ls = np.linalg.cholesky(scale)
    logdet_x = 2.0 * np.sum(np.log(np.diag(Lx)))
    logdet_s = 2.0 * np.sum(np.log(np.diag(Ls)))
    M = np.linalg.solve(Ls, Lx)
    tr = float(np.sum(M * M))
    return float(
        0.5 * (dof - p - 1) * logdet_x
        - 0.5 * tr
        - 0.5 * dof * p * math.log(2.0)
        - 0.5 * dof * logdet_s
        - multigammaln(0.5 * dof, p)
    )


def sample_wishart(V, params: WishartParams, rng: np.random.Generator) -> np.ndarray:
    """Draw ``A ~ W_d(V)`` in the configured parameterisation."""
    V = np.atleast_2d(np.asarray(V, dtype=np.float64))
    return bartlett(params.dof, params.factor() * V, rng)


def log_wishart_density(A, V, params: WishartParams) -> float:
    A = np.atleast_2d(np.asarray(A, dtype=np.float64))
    V = np.atleast_2d(np.asarray(V, dtype=np.float64))
    if A.shape != V.shape:
        raise ValueError(f"dimension mismatch: {A.shape} vs {V.shape}")
    if not is_spd(A):
        raise ValueError("A is not positive definite")
    return wishart_logpdf(A, params.dof, params.factor() * V)


def resize_down(A, keep) -> np.ndarray:
    """Principal submatrix on the surviving indices ``keep``."""
    keep = np.asarray(keep, dtype=np.int64)
    if keep.size == 0:
        raise ValueError("all chains deleted")
    return np.asarray(A)[np.ix_(keep, keep)].copy()


def augment_row(A_core, params: WishartParams, rng: np.random.Generator):
    """Draw one new row/column; returns ``(cross, diag)``."""
    A_core = np.asarray(A_core, dtype=np.float64)
    if A_core.size == 0:
        A_core = np.zeros((0, 0))
    k = A_core.shape[0]
    nu = params.dof - k
    if not nu > 0:
        raise ValueError(f"dof {params.dof} too small to append a row to a {k}x{k} matrix")
    fs = params.factor() * params.s
    if k:
        L = _chol(A_core)
        a = math.sqrt(fs) * (L @ rng.standard_normal(k))
        quad = float(a @ np.linalg.solve(A_core, a))
    else:
        a = np.zeros(0)
        quad = 0.0
    c = quad + fs * rng.chisquare(nu)
    return a, c


def log_augment_row_density(A_core, a, c, params: WishartParams) -> float:
    """Log density of the row ``(a, c)`` appended to ``A_core``."""
    A_core = np.asarray(A_core, dtype=np.float64)
    k = len(a)
    nu = params.dof - k
    fs = params.factor() * params.s
    out = 0.0
    if k:
        L = np.linalg.cholesky(A_core)
        z = np.linalg.solve(L, a)
        quad = float(z @ z)
        out += -0.5 * k * math.log(2 * math.pi * fs) - np.sum(np.log(np.diag(L))) - 0.5 * quad / fs
    else:
        quad = 0.0
    schur = c - quad
    if schur <= 0:
        return -math.inf
    # W_1(nu, fs) is a Gamma(nu/2, scale 2 fs) law
    out += (
        (0.5 * nu - 1) * math.log(schur)
        - schur / (2 * fs)
        - 0.5 * nu * math.log(2 * fs)
        - math.lgamma(0.5 * nu)
    )
    return float(out)


def extend(A, a, c) -> np.ndarray:
    k = A.shape[0]
    out = np.empty((k + 1, k + 1))
    out[:k, :k] = A
    out[:k, k] = a
    out[k, :k] = a
    out[k, k] = c
    return out


def augment_up(A_core, n_new: int, params: WishartParams, rng: np.random.Generator) -> np.ndarray:
    A = np.atleast_2d(np.asarray(A_core, dtype=np.float64)) if np.size(A_core) else np.zeros((0, 0))
    for _ in range(n_new):
        a, c = augment_row(A, params, rng)
        A = extend(A, a, c)
    return A


def log_augment_density(A, k_core: int, params: WishartParams) -> float:
    """Joint log density of rows ``k_core..`` of ``A`` given its leading block."""
    out = 0.0
    for j in range(k_core, A.shape[0]):
        out += log_augment_row_density(A[:j, :j], A[:j, j], A[j, j], params)
    return out


def _split(chains_prev, chains_now):
    prev_ix = {c: i for i, c in enumerate(chains_prev)}
    surv = [i for i, c in enumerate(chains_now) if c in prev_ix]
    born = [i for i, c in enumerate(chains_now) if c not in prev_ix]
    surv_prev = [prev_ix[chains_now[i]] for i in surv]
    return surv, born, surv_prev


def transition_scale(A_prev, chains_prev, chains_now, params: WishartParams) -> np.ndarray:
    """Scale matrix of the transition law written as a single Wishart.

    Deleting dead chains, drawing around the survivors and appending births is
    the same as drawing ``A_t ~ Wishart(d, f * Psi)`` with ``Psi`` equal to
    ``A_{t-1}`` on surviving chains, ``s`` on the diagonal of newborn chains
    and zero elsewhere.
    """
    chains_now = list(chains_now)
    k = len(chains_now)
    f = params.factor()
    if A_prev is None:
        return np.eye(k) * (f * params.s)
    surv, born, surv_prev = _split(list(chains_prev), chains_now)
    Psi = np.zeros((k, k))
    if surv:
        Psi[np.ix_(surv, surv)] = f * np.asarray(A_prev)[np.ix_(surv_prev, surv_prev)]
    Psi[born, born] = f * params.s
    return Psi


def log_transition_density(A_prev, chains_prev, A_now, chains_now, params: WishartParams) -> float:
    """``log p(A_t | A_{t-1})`` with deaths deleted and births augmented.

    ``A_prev=None`` gives the initial law, a draw around ``s*I``.
    """
    A_now = np.asarray(A_now, dtype=np.float64)
    if A_now.shape[0] == 0:
        return 0.0
    if not params.dof > A_now.shape[0] - 1:
        # more blocks than the dof supports: the law puts no mass here
        return -math.inf
    Psi = transition_scale(A_prev, chains_prev, chains_now, params)
    return wishart_logpdf(A_now, params.dof, Psi)


def log_transition_density_factored(A_prev, chains_prev, A_now, chains_now, params: WishartParams) -> float:
    """Same density evaluated as survivor Wishart times row-by-row augmentation."""
    chains_now = list(chains_now)
    if A_prev is None:
        chains_prev = []
    surv, born, surv_prev = _split(list(chains_prev), chains_now)
    perm = surv + born
    A = np.asarray(A_now)[np.ix_(perm, perm)]
    out = 0.0
    if surv:
        out += log_wishart_density(A[: len(surv), : len(surv)], resize_down(A_prev, surv_prev), params)
    if born:
        out += log_augment_density(A, len(surv), params)
    return out


def wishart_logpdf_batch(X, dof: float, scale) -> np.ndarray:
    """Vectorised :func:`wishart_logpdf` over leading dimensions of ``X`` and ``scale``."""
    X = np.asarray(X, dtype=np.float64)
    scale = np.asarray(scale, dtype=np.float64)
    p = X.shape[-1]
    shape = np.broadcast_shapes(X.shape[:-2], scale.shape[:-2])
    if p == 0:
        return np.zeros(shape)
    Lx = np.linalg.cholesky(X)
    Ls = np.linalg.cholesky(scale)
    logdet_x = 2.0 * np.sum(np.log(np.diagonal(Lx, axis1=-2, axis2=-1)), axis=-1)
    logdet_s = 2.0 * np.sum(np.log(np.diagonal(Ls, axis1=-2, axis2=-1)), axis=-1)
    Ls, Lx = np.broadcast_arrays(Ls, Lx)
    M = np.linalg.solve(Ls, Lx)
    tr = np.sum(M * M, axis=(-2, -1))
    return (
        0.5 * (dof - p - 1) * logdet_x
        - 0.5 * tr
        - 0.5 * dof * p * math.log(2.0)
        - 0.5 * dof * logdet_s
        - multigammaln(0.5 * dof, p)
    )


def sample_A_transition(
    A_prev, chains_prev, chains_now, params: WishartParams, rng: np.random.Generator
) -> np.ndarray:
    """Draw ``A_t`` given ``A_{t-1}``; rows follow ``chains_now``."""
    chains_now = list(chains_now)
    if A_prev is None:
        chains_prev = []
    surv, born, surv_prev = _split(list(chains_prev), chains_now)
    if surv:
        core = sample_wishart(resize_down(A_prev, surv_prev), params, rng)
    else:
        core = np.zeros((0, 0))
    full = augment_up(core, len(born), params, rng)
    perm = np.asarray(surv + born)
    out = np.empty_like(full)
    out[np.ix_(perm, perm)] = full
    return out


def log_proposal_density(A_new, A_old, dof: float) -> float:
    """Random-walk Wishart proposal centred on ``A_old`` (mean-preserving)."""
    return wishart_logpdf(A_new, dof, np.asarray(A_old) / dof)


def propose(A_old, dof: float, rng: np.random.Generator) -> np.ndarray:
    return bartlett(dof, np.asarray(A_old) / dof, rng)


def bartlett_batch(dof: float, scale, rng: np.random.Generator) -> np.ndarray:
    """Independent Wishart draws for a stack of scale matrices ``(B, p, p)``."""
    scale = np.asarray(scale, dtype=np.float64)
    nb, p, _ = scale.shape
    if p == 0:
        return np.zeros((nb, 0, 0))
    if not dof > p - 1:
        raise ValueError(f"Wishart dof {dof} too small for dimension {p}")
    L = np.linalg.cholesky(scale)
    B = np.zeros((nb, p, p))
    ix = np.arange(p)
    B[:, ix, ix] = np.sqrt(rng.chisquare(dof - ix, size=(nb, p)))
    il = np.tril_indices(p, -1)
    B[:, il[0], il[1]] = rng.standard_normal((nb, len(il[0])))
    LB = L @ B
    X = LB @ np.swapaxes(LB, -1, -2)
    return 0.5 * (X + np.swapaxes(X, -1, -2))


def augment_up_batch(A_core, n_new: int, params: WishartParams, rng: np.random.Generator) -> np.ndarray:
    """:func:`augment_up` applied to every matrix of a stack."""
    A = np.asarray(A_core, dtype=np.float64)
    fs = params.factor() * params.s
    for _ in range(n_new):
        nb, k, _ = A.shape
        if not params.dof - k > 0:
            raise ValueError(f"dof {params.dof} too small to append a row to a {k}x{k} matrix")
        z = rng.standard_normal((nb, k))
        if k:
            L = np.linalg.cholesky(A)
            a = math.sqrt(fs) * np.einsum("bij,bj->bi", L, z)
        else:
            a = np.zeros((nb, 0))
        # a^T A^{-1} a = fs |z|^2 since a = sqrt(fs) L z
        c = fs * (np.sum(z * z, axis=1) + rng.chisquare(params.dof - k, size=nb))
        out = np.empty((nb, k + 1, k + 1))
        out[:, :k, :k] = A
        out[:, :k, k] = a
        out[:, k, :k] = a
        out[:, k, k] = c
        A = out
    return A


def sample_A_transition_batch(
    A_prev, chains_prev, chains_now, params: WishartParams, rng: np.random.Generator, size: int | None = None
) -> np.ndarray:
    """Vectorised :func:`sample_A_transition` over a stack ``A_prev`` of shape ``(B, k, k)``.

    With ``A_prev=None`` draws ``size`` matrices from the initial law.
    """
    chains_now = list(chains_now)
    if A_prev is None:
        chains_prev = []
        nb = int(size)
    else:
        A_prev = np.asarray(A_prev, dtype=np.float64)
        nb = A_prev.shape[0]
    surv, born, surv_prev = _split(list(chains_prev), chains_now)
    if surv:
        core = A_prev[:, surv_prev][:, :, surv_prev]
        core = bartlett_batch(params.dof, params.factor() * core, rng)
    else:
        core = np.zeros((nb, 0, 0))
    full = augment_up_batch(core, len(born), params, rng)
    perm = np.asarray(surv + born, dtype=np.int64)
    out = np.empty_like(full)
    out[:, perm[:, None], perm[None, :]] = full
    return out
