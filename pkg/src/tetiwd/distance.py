"""Pairwise squared-distance inputs: loading, validation and Gram conversions.

Matrices are dense float64.  Two on-disk formats are supported:

* ``csv``: a plain numeric grid, comma separated, no header.
* ``binary``: the 4-byte magic ``b"TDW1"``, a little-endian ``u64`` size ``n``
  and then ``n*n`` little-endian doubles in row-major order.

A manifest JSON file lists the per-epoch files in time order (see
:func:`load_manifest`).
"""

from __future__ import annotations

import json
import logging
import os
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

logger = logging.getLogger(__name__)

MAGIC = b"TDW1"


class DataValidationError(ValueError):
    """Raised when an input matrix violates the distance-matrix contract."""


@dataclass(frozen=True)
class DistanceSeries:
    """Ordered per-epoch squared-distance matrices ``D_1, ..., D_T``."""

    matrices: tuple[np.ndarray, ...]
    cross: np.ndarray | None = None  # optional N x N distances across all epochs

    def __post_init__(self):
        if len(self.matrices) < 1:
            raise DataValidationError("a distance series needs at least one epoch")
        for D in self.matrices:
            D.setflags(write=False)
        if self.cross is not None:
            if self.cross.shape != (self.total, self.total):
                raise DataValidationError(
                    f"cross-epoch matrix has shape {self.cross.shape}, expected "
                    f"({self.total}, {self.total})"
                )
            self.cross.setflags(write=False)

    @property
    def T(self) -> int:
        return len(self.matrices)

    @property
    def sizes(self) -> tuple[int, ...]:
        return tuple(D.shape[0] for D in self.matrices)

    @property
    def total(self) -> int:
        return sum(self.sizes)

    def offsets(self) -> np.ndarray:
        """Row offset of each epoch inside the cross-epoch matrix."""
        return np.concatenate([[0], np.cumsum(self.sizes)[:-1]]).astype(int)

    def __getitem__(self, t: int) -> np.ndarray:
        return self.matrices[t]

    def __len__(self) -> int:
        return self.T


@dataclass
class GramMatrix:
    K: np.ndarray
    centered: bool = True
    clipped_mass: float = 0.0

    @property
    def n(self) -> int:
        return self.K.shape[0]

    @property
    def Q(self) -> np.ndarray:
        return centering_matrix(self.n)


@dataclass
class ValidationReport:
    is_negative_type: bool
    min_eigenvalue: float
    clipped_mass: float
    messages: list[str] = field(default_factory=list)


def centering_matrix(n: int) -> np.ndarray:
    return np.eye(n) - np.full((n, n), 1.0 / n)


def _center(M: np.ndarray) -> np.ndarray:
    # Q M Q without forming Q
    M = M - M.mean(axis=0, keepdims=True)
    return M - M.mean(axis=1, keepdims=True)


def check_distance_matrix(D, tol: float = 1e-8, name: str = "matrix") -> np.ndarray:
    """Validate and clean a squared-distance matrix.

    Mild asymmetry and diagonal noise (up to ``tol`` relative to the largest
    entry) are repaired; anything larger raises :class:`DataValidationError`.
    """
    D = np.array(D, dtype=np.float64)
    if D.ndim != 2 or D.shape[0] != D.shape[1]:
        raise DataValidationError(f"{name}: expected a square matrix, got shape {D.shape}")
    if not np.all(np.isfinite(D)):
        raise DataValidationError(f"{name}: non-finite entries")
    scale = max(1.0, float(np.max(np.abs(D)))) if D.size else 1.0
    atol = tol * scale
    asym = float(np.max(np.abs(D - D.T))) if D.size else 0.0
    if asym > atol:
        raise DataValidationError(f"{name}: asymmetric input (max |D - D^T| = {asym:.3g})")
    D = 0.5 * (D + D.T)
    diag = np.abs(np.diag(D))
    if np.any(diag > atol):
        raise DataValidationError(f"{name}: nonzero diagonal (max {diag.max():.3g})")
    np.fill_diagonal(D, 0.0)
    if np.any(D < -atol):
        raise DataValidationError(f"{name}: negative entries (min {D.min():.3g})")
    np.maximum(D, 0.0, out=D)
    return D


def validate_negative_type(D, tol: float = 1e-8) -> ValidationReport:
    """Check whether ``D`` is a squared Euclidean distance matrix.

    ``D`` is of negative type iff ``-QDQ/2`` has no negative eigenvalues.
    """
    D = np.asarray(D, dtype=np.float64)
    if D.shape[0] == 0:
        return ValidationReport(True, 0.0, 0.0)
    evals = np.linalg.eigvalsh(-0.5 * _center(D))
    lam_min = float(evals[0])
    lam_max = float(evals[-1])
    clip_tol = 1e-8 * max(lam_max, 0.0)
    neg = evals[evals < 0]
    clipped = float(np.sum(np.abs(neg[neg >= -clip_tol])))
    messages = []
    ok = lam_min >= -tol
    if not ok:
        messages.append(f"minimum eigenvalue of -QDQ/2 is {lam_min:.3g}; D is not of negative type")
    return ValidationReport(ok, lam_min, clipped, messages)


def gram_from_distances(D) -> GramMatrix:
    """Centered Gram matrix ``K_c = -QDQ/2`` with negative eigenvalues clipped.

    Eigenvalues below ``-1e-8 * lambda_max`` trigger a warning; they are
    clipped all the same since the likelihood works on ``D`` directly.
    """
    D = np.asarray(D, dtype=np.float64)
    Kc = -0.5 * _center(D)
    Kc = 0.5 * (Kc + Kc.T)
    if Kc.shape[0] == 0:
        return GramMatrix(Kc, True, 0.0)
    evals, evecs = np.linalg.eigh(Kc)
    neg = evals < 0
    if not np.any(neg):
        return GramMatrix(Kc, True, 0.0)
    tol = 1e-8 * max(float(evals[-1]), 0.0)
    if np.any(evals < -tol):
        logger.warning(
            "distance matrix is not of negative type (min eigenvalue %.3g); clipping", evals[0]
        )
    clipped = float(np.sum(-evals[neg]))
    evals = np.where(neg, 0.0, evals)
    Kc = (evecs * evals) @ evecs.T
    Kc = _center(0.5 * (Kc + Kc.T))
    return GramMatrix(Kc, True, clipped)


def distances_from_gram(K) -> np.ndarray:
    """``D_ij = K_ii + K_jj - 2 K_ij``."""
    if isinstance(K, GramMatrix):
        K = K.K
    K = np.asarray(K, dtype=np.float64)
    g = np.diag(K)
    D = g[:, None] + g[None, :] - 2.0 * K
    D = 0.5 * (D + D.T)
    np.fill_diagonal(D, 0.0)
    return D


def sq_distances(X) -> np.ndarray:
    """Squared Euclidean distances between the rows of ``X``."""
    X = np.asarray(X, dtype=np.float64)
    return distances_from_gram(X @ X.T)


# -- file formats ---------------------------------------------------------


def write_matrix(path, D, fmt: str = "csv") -> None:
    """Write ``D`` atomically (temp file + rename)."""
    path = Path(path)
    D = np.ascontiguousarray(D, dtype="<f8")
    tmp = path.with_name(path.name + ".tmp")
    if fmt == "csv":
        np.savetxt(tmp, D, delimiter=",", fmt="%.17g")
    elif fmt == "binary":
        with open(tmp, "wb") as fh:
            fh.write(MAGIC)
            fh.write(struct.pack("<Q", D.shape[0]))
            fh.write(D.tobytes(order="C"))
    else:
        raise ValueError(f"unknown matrix format {fmt!r}")
    os.replace(tmp, path)


def read_matrix(path, fmt: str | None = None) -> np.ndarray:
    path = Path(path)
    if fmt is None:
        fmt = "binary" if path.suffix in (".bin", ".tdw") else "csv"
    if fmt == "csv":
        try:
            D = np.loadtxt(path, delimiter=",", ndmin=2, dtype=np.float64)
        except ValueError as exc:
            raise DataValidationError(f"{path}: could not parse CSV ({exc})") from exc
        if D.shape[0] != D.shape[1]:
            raise DataValidationError(f"{path}: dimension mismatch, shape {D.shape}")
        return D
    if fmt == "binary":
        raw = path.read_bytes()
        if raw[:4] != MAGIC:
            raise DataValidationError(f"{path}: bad magic {raw[:4]!r}")
        (n,) = struct.unpack("<Q", raw[4:12])
        body = raw[12:]
        if len(body) != 8 * n * n:
            raise DataValidationError(
                f"{path}: dimension mismatch, header says n={n} but payload has {len(body)} bytes"
            )
        return np.frombuffer(body, dtype="<f8").reshape(n, n).astype(np.float64)
    raise ValueError(f"unknown matrix format {fmt!r}")


def load_distance_series(
    paths: Sequence, format: str = "csv", tol: float = 1e-8, cross=None
) -> DistanceSeries:
    """Load per-epoch matrices (and optionally the cross-epoch matrix)."""
    mats = []
    for p in paths:
        D = read_matrix(p, format)
        D = check_distance_matrix(D, tol, name=str(p))
        mats.append(D)
    C = None
    if cross is not None:
        C = check_distance_matrix(read_matrix(cross, format), tol, name=str(cross))
    return DistanceSeries(tuple(mats), C)


def load_manifest(path, tol: float = 1e-8) -> tuple[DistanceSeries, dict]:
    """Load a series from a manifest.

    The manifest is a JSON object::

        {"format": "csv", "matrices": ["d_01.csv", ...],
         "cross_distances": "dstar.csv" | null, "latent_dims": [...] | null}

    Paths are relative to the manifest's directory.
    """
    path = Path(path)
    with open(path) as fh:
        meta = json.load(fh)
    fmt = meta.get("format", "csv")
    base = path.parent
    files = [base / f for f in meta["matrices"]]
    for f in files:
        if not f.exists():
            raise FileNotFoundError(f"missing matrix file {f}")
    cross = meta.get("cross_distances")
    series = load_distance_series(files, fmt, tol, cross=base / cross if cross else None)
    return series, meta


def save_series(outdir, series: DistanceSeries, fmt: str = "csv", extra: dict | None = None) -> Path:
    """Write every matrix plus a manifest into ``outdir``; returns the manifest path."""
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    ext = "csv" if fmt == "csv" else "bin"
    names = []
    for t, D in enumerate(series.matrices):
        name = f"d_{t + 1:02d}.{ext}"
        write_matrix(outdir / name, D, fmt)
        names.append(name)
    meta = {"format": fmt, "matrices": names, "cross_distances": None}
    if series.cross is not None:
        write_matrix(outdir / f"dstar.{ext}", series.cross, fmt)
        meta["cross_distances"] = f"dstar.{ext}"
    if extra:
        meta.update(extra)
    write_json(outdir / "manifest.json", meta)
    return outdir / "manifest.json"


def write_json(path, obj) -> None:
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "w") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")
    os.replace(tmp, path)


def write_text(path, text: str) -> None:
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "w") as fh:
        fh.write(text)
    os.replace(tmp, path)
