"""Translation-invariant generalized Wishart likelihood of a distance matrix.

The covariance of one epoch is ``Sigma = alpha*I + Z A Z^T`` where ``Z`` is the
0/1 assignment matrix.  The likelihood of the squared-distance matrix ``D`` is,
up to a constant,

    (dof/2) * log pdet(W~) + (dof/4) * tr(W~ D),
    W~ = W - (1^T W 1)^{-1} W 1 1^T W,    W = Sigma^{-1}.

Two evaluation routes exist.  The reference route materialises ``Sigma`` and
works with eigendecompositions (O(n^3)).  The fast route never forms an n x n
matrix: with ``G = alpha*I + N^{1/2} A N^{1/2}`` (``N = diag(block sizes)``)
and the block sums ``S = Z^T D Z`` one has

    log pdet(W~) = log n - log|Sigma| - log(1^T W 1)
    log|Sigma|   = (n - k) log alpha + log|G|
    1^T W 1      = sqrt(n_b)^T G^{-1} sqrt(n_b)
    tr(W~ D)     = -tr(M S)/alpha^2 - q^T S q / (1^T W 1)

with ``M = A - A N^{1/2} G^{-1} N^{1/2} A`` and ``q = N^{-1/2} G^{-1} sqrt(n_b)``.
Everything is k x k, so evaluation costs O(k^3) once ``S`` is known.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ._kernels import loglik_batch
from .distance import GramMatrix

ZERO_EIG_RTOL = 1e-10


@dataclass(frozen=True)
class BlockCov:
    """``alpha*I + Z A Z^T`` with ``Z`` given by a 0-based block assignment."""

    alpha: float
    A: np.ndarray
    assignment: np.ndarray

    @property
    def n(self) -> int:
        return len(self.assignment)

    @property
    def k(self) -> int:
        return self.A.shape[0]

    def sizes(self) -> np.ndarray:
        return np.bincount(self.assignment, minlength=self.k)

    def Z(self) -> np.ndarray:
        Z = np.zeros((self.n, self.k))
        Z[np.arange(self.n), self.assignment] = 1.0
        return Z

    def sigma(self) -> np.ndarray:
        a = self.assignment
        S = self.A[np.ix_(a, a)].copy()
        S[np.diag_indices(self.n)] += self.alpha
        return S


@dataclass
class LikelihoodWorkspace:
    W: np.ndarray
    W_tilde: np.ndarray
    Delta: np.ndarray
    logdet_gen: float


def build_block_cov(assignment, A, alpha: float) -> BlockCov:
    assignment = np.asarray(assignment, dtype=np.int64)
    A = np.atleast_2d(np.asarray(A, dtype=np.float64))
    if A.shape[0] != A.shape[1]:
        raise ValueError(f"A must be square, got {A.shape}")
    if not alpha > 0:
        raise ValueError("alpha must be positive")
    k = A.shape[0]
    if assignment.size and (assignment.min() < 0 or assignment.max() >= k):
        raise ValueError(f"assignment refers to blocks outside [0, {k})")
    sizes = np.bincount(assignment, minlength=k)
    if np.any(sizes[:k] == 0):
        raise ValueError("empty block in assignment")
    if not np.allclose(A, A.T, rtol=0, atol=1e-12 * max(1.0, np.abs(A).max())):
        raise ValueError("A must be symmetric")
    try:
        np.linalg.cholesky(A)
    except np.linalg.LinAlgError:
        raise ValueError("A is not positive definite") from None
    return BlockCov(float(alpha), 0.5 * (A + A.T), assignment)


def delta_matrix(Sigma) -> np.ndarray:
    d = np.diag(Sigma)
    return d[:, None] + d[None, :] - 2.0 * Sigma


def _tilde(W: np.ndarray) -> np.ndarray:
    w1 = W.sum(axis=1)
    Wt = W - np.outer(w1, w1) / w1.sum()
    return 0.5 * (Wt + Wt.T)


def compute_tilde_w(cov: BlockCov, method: str = "woodbury") -> LikelihoodWorkspace:
    """Inverse covariance, its translation-projected form and ``Delta``."""
    Sigma = cov.sigma()
    if method == "dense":
        evals, V = np.linalg.eigh(Sigma)
        if evals[0] <= 0:
            raise np.linalg.LinAlgError("Sigma_B is numerically singular")
        W = (V / evals) @ V.T
    elif method == "woodbury":
        # W = (I - Z M' Z^T)/alpha with M' = (alpha A^{-1} + N)^{-1}
        alpha, A = cov.alpha, cov.A
        nb = cov.sizes().astype(float)
        Mp = _core_M(A, nb, alpha)
        a = cov.assignment
        W = -Mp[np.ix_(a, a)]
        W[np.diag_indices(cov.n)] += 1.0
        W /= alpha
    else:
        raise ValueError(f"unknown method {method!r}")
    W = 0.5 * (W + W.T)
    Wt = _tilde(W)
    return LikelihoodWorkspace(W, Wt, delta_matrix(Sigma), generalized_logdet(Wt))


def _core_M(A, nb, alpha):
    r = np.sqrt(nb)
    G = alpha * np.eye(len(nb)) + r[:, None] * A * r[None, :]
    B = r[:, None] * A
    Y = np.linalg.solve(G, B)
    return (A - B.T @ Y) / alpha


def generalized_logdet(W_tilde) -> float:
    """Log of the product of the nonzero eigenvalues; the kernel must be 1-D."""
    W_tilde = np.asarray(W_tilde, dtype=np.float64)
    n = W_tilde.shape[0]
    if n <= 1:
        return 0.0
    evals = np.linalg.eigvalsh(0.5 * (W_tilde + W_tilde.T))
    thresh = ZERO_EIG_RTOL * max(abs(evals[-1]), abs(evals[0]))
    nz = evals[np.abs(evals) > thresh]
    if nz.size != n - 1 or np.any(nz < 0):
        raise ValueError(f"unexpected rank: {nz.size} nonzero eigenvalues, expected {n - 1}")
    return float(np.sum(np.log(nz)))


def block_sums(D, assignment, k: int | None = None) -> np.ndarray:
    """``S = Z^T D Z``: sums of distances between every pair of blocks."""
    assignment = np.asarray(assignment)
    if k is None:
        k = int(assignment.max()) + 1 if assignment.size else 0
    Z = np.zeros((len(assignment), k))
    Z[np.arange(len(assignment)), assignment] = 1.0
    S = Z.T @ np.asarray(D) @ Z
    return 0.5 * (S + S.T)


def loglik_from_stats(S, nb, A, alpha: float, dof: float):
    """Fast-path log-likelihood from block statistics.

    ``S`` has shape ``(..., k, k)``, ``nb`` shape ``(..., k)`` and ``A`` shape
    ``(..., k, k)``; leading dimensions broadcast, so a whole stack of
    candidate partitions is evaluated in one call.  Blocks of size zero are
    allowed and leave the value unchanged, which lets candidates with
    different block counts share one stack.
    """
    S = np.asarray(S, dtype=np.float64)
    nb = np.asarray(nb, dtype=np.float64)
    A = np.asarray(A, dtype=np.float64)
    k = nb.shape[-1]
    if (
        loglik_batch is not None
        and S.ndim == 3
        and S.shape == A.shape
        and nb.shape == S.shape[:2]
        and k > 0
    ):
        return dof * loglik_batch(
            np.ascontiguousarray(S), np.ascontiguousarray(nb), np.ascontiguousarray(A), float(alpha)
        )
    n = nb.sum(axis=-1)
    if k == 0:
        return np.zeros(np.broadcast_shapes(S.shape[:-2], nb.shape[:-1], A.shape[:-2]))
    r = np.sqrt(nb)
    B = r[..., :, None] * A
    G = B * r[..., None, :]
    G = G + alpha * np.eye(k)
    L = np.linalg.cholesky(G)
    logdetG = 2.0 * np.sum(np.log(np.diagonal(L, axis1=-2, axis2=-1)), axis=-1)
    B, rr = np.broadcast_arrays(B, r[..., :, None])
    Y = np.linalg.solve(G, np.concatenate([B, rr], axis=-1))
    YB = Y[..., :, :k]
    z = Y[..., :, k]
    M = A - np.swapaxes(B, -1, -2) @ YB
    one_w_one = np.sum(r * z, axis=-1)
    # empty (padding) blocks have r = 0 and contribute nothing
    q = np.divide(z, r, out=np.zeros_like(z), where=r > 0)
    trMS = np.sum(M * S, axis=(-2, -1))
    qSq = np.einsum("...i,...ij,...j->...", q, S, q)
    tr_wd = -trMS / alpha**2 - qSq / one_w_one
    logdet_sigma = (n - k) * np.log(alpha) + logdetG
    logpdet = np.log(n) - logdet_sigma - np.log(one_w_one)
    return 0.5 * dof * logpdet + 0.25 * dof * tr_wd


def loglik_tiw(D, cov: BlockCov, dof: float, method: str = "fast") -> float:
    """Translation-invariant Wishart log-likelihood (unnormalised)."""
    D = np.asarray(D, dtype=np.float64)
    if D.shape != (cov.n, cov.n):
        raise ValueError(f"size mismatch: D is {D.shape}, covariance is {cov.n}x{cov.n}")
    if method == "fast":
        S = block_sums(D, cov.assignment, cov.k)
        return float(loglik_from_stats(S, cov.sizes(), cov.A, cov.alpha, dof))
    if method == "reference":
        return loglik_tiw_sigma(D, cov.sigma(), dof)
    raise ValueError(f"unknown method {method!r}")


def loglik_tiw_sigma(D, Sigma, dof: float) -> float:
    """Reference evaluation for an arbitrary covariance via eigendecomposition."""
    D = np.asarray(D, dtype=np.float64)
    Sigma = np.asarray(Sigma, dtype=np.float64)
    n = Sigma.shape[0]
    evals, V = np.linalg.eigh(0.5 * (Sigma + Sigma.T))
    W = (V / evals) @ V.T
    Wt = _tilde(0.5 * (W + W.T))
    ldg = generalized_logdet(Wt) if n > 1 else 0.0
    return 0.5 * dof * ldg + 0.25 * dof * float(np.sum(Wt * D))


def loglik_wishart_gram(K, cov: BlockCov, dof: float) -> float:
    """Standard Wishart log-likelihood of a similarity matrix ``K``."""
    if isinstance(K, GramMatrix):
        K = K.K
    K = np.asarray(K, dtype=np.float64)
    if K.shape != (cov.n, cov.n):
        raise ValueError(f"size mismatch: K is {K.shape}, covariance is {cov.n}x{cov.n}")
    L = np.linalg.cholesky(cov.sigma())
    logdet = 2.0 * np.sum(np.log(np.diag(L)))
    Linv_K = np.linalg.solve(L, K)
    tr = np.trace(np.linalg.solve(L, Linv_K.T).T) if K.size else 0.0
    return -0.5 * dof * logdet - 0.5 * dof * float(tr)
