"""Linear-kernel Gram matrices and their unit-trace normalisations."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Literal, Sequence

import numpy as np

from .errors import ContractError, DegenerateInputError, NotPSDError, ShapeError
from .tensor import flatten_batch, l2_normalize_rows

Normalization = Literal["raw", "def1", "trace1"]

SYM_TOL = 1e-12
PSD_SLACK = 1e-9


@dataclass(frozen=True)
class GramMatrix:
    entries: np.ndarray
    normalization: Normalization = "raw"

    def __post_init__(self):
        e = np.asarray(self.entries, dtype=np.float64)
        if e.ndim != 2 or e.shape[0] != e.shape[1]:
            raise ShapeError(f"Gram matrix must be square, got {e.shape}")
        if not np.all(np.isfinite(e)):
            raise DegenerateInputError("Gram matrix has non-finite entries")
        scale = max(1.0, float(np.max(np.abs(e)))) if e.size else 1.0
        if np.max(np.abs(e - e.T), initial=0.0) > SYM_TOL * scale:
            raise ShapeError("Gram matrix is not symmetric")
        object.__setattr__(self, "entries", e)

    @property
    def n(self) -> int:
        return self.entries.shape[0]

    @property
    def trace(self) -> float:
        return float(np.trace(self.entries))

    def __array__(self, dtype=None, copy=None):
        return self.entries if dtype is None else self.entries.astype(dtype)


def as_matrix(m) -> np.ndarray:
    return m.entries if isinstance(m, GramMatrix) else np.asarray(m, dtype=np.float64)


def linear_gram(features) -> GramMatrix:
    """K_ij = <x_i, x_j> over the rows of an [n, M] matrix."""
    x = np.asarray(features, dtype=np.float64)
    if x.ndim != 2 or x.shape[0] < 1 or x.shape[1] < 1:
        raise ShapeError(f"linear_gram expects an [n, M] matrix with n, M >= 1, got {x.shape}")
    k = x @ x.T
    return GramMatrix(0.5 * (k + k.T), "raw")


def normalize_def1(k) -> GramMatrix:
    """A_ij = K_ij / (n sqrt(K_ii K_jj)); unit trace with constant diagonal 1/n."""
    k = as_matrix(k)
    d = np.diag(k)
    if np.any(d <= 1e-12):
        raise DegenerateInputError("normalize_def1: a diagonal entry is (near) zero")
    s = np.sqrt(d)
    a = k / np.outer(s, s) / k.shape[0]
    np.fill_diagonal(a, 1.0 / k.shape[0])
    return GramMatrix(0.5 * (a + a.T), "def1")


def trace_normalize(m) -> GramMatrix:
    e = as_matrix(m)
    t = float(np.trace(e))
    if not t > 1e-300:
        raise DegenerateInputError(f"trace_normalize: non-positive trace {t}")
    return GramMatrix(e / t, "trace1")


def hadamard_joint(mats: Sequence) -> GramMatrix:
    """Elementwise product of equally sized Gram matrices, trace-normalised."""
    if len(mats) == 0:
        raise ContractError("hadamard_joint needs at least one matrix")
    arrays = [as_matrix(m) for m in mats]
    n = arrays[0].shape
    for a in arrays[1:]:
        if a.shape != n:
            raise ShapeError(f"hadamard_joint: size mismatch {n} vs {a.shape}")
    prod = arrays[0].copy()
    for a in arrays[1:]:
        prod = prod * a
    return trace_normalize(prod)


def feature_gram(x) -> GramMatrix:
    """Batch features [B, ...] -> flattened, row-normalised, linear Gram, unit trace."""
    rows = l2_normalize_rows(flatten_batch(x))
    return trace_normalize(linear_gram(rows))


def check_psd(m, slack: float = PSD_SLACK) -> float:
    """Return the smallest eigenvalue; raise NotPSDError below ``-slack``."""
    lo = float(np.linalg.eigvalsh(as_matrix(m))[0])
    if lo < -slack:
        raise NotPSDError(f"matrix is not PSD: min eigenvalue {lo:.3e}")
    return lo
