"""Matrix-based Renyi alpha-entropy, joint entropy and mutual information (in bits).

Every function takes unit-trace PSD Gram matrices (``GramMatrix`` or plain
arrays). At alpha = 2 the entropy is ``-log2 ||A||_F^2``, which needs no
eigendecomposition; for other orders the eigenvalue path is used.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence, Union

import numpy as np

from .errors import ContractError, DegenerateInputError, NotPSDError, NumericError, ShapeError
from .gram import GramMatrix, as_matrix, hadamard_joint
from .linalg import jacobi_eigh

NEG_EIG_SLACK = 1e-9


@dataclass(frozen=True)
class EntropyOrder:
    alpha: float

    def __post_init__(self):
        a = float(self.alpha)
        if not math.isfinite(a) or a <= 0 or abs(a - 1.0) <= 1e-9:
            raise ContractError(f"entropy order must be positive and != 1, got {self.alpha}")
        object.__setattr__(self, "alpha", a)

    @property
    def is_two(self) -> bool:
        return self.alpha == 2.0


OrderLike = Union[float, int, EntropyOrder]


def as_order(order: OrderLike) -> EntropyOrder:
    return order if isinstance(order, EntropyOrder) else EntropyOrder(order)


def _square(a) -> np.ndarray:
    e = as_matrix(a)
    if e.ndim != 2 or e.shape[0] != e.shape[1]:
        raise ShapeError(f"expected a square matrix, got {e.shape}")
    return e


def spectrum(a, solver: str = "lapack") -> np.ndarray:
    """Eigenvalues of a symmetric PSD matrix with noise in [-1e-9, 0) clamped to 0."""
    e = _square(a)
    e = 0.5 * (e + e.T)
    if solver == "lapack":
        try:
            w = np.linalg.eigvalsh(e)
        except np.linalg.LinAlgError as exc:
            raise NumericError(f"eigensolver failed: {exc}") from exc
    elif solver == "jacobi":
        w = jacobi_eigh(e)
    else:
        raise ContractError(f"unknown solver {solver!r}")
    if w.size and w[0] < -NEG_EIG_SLACK:
        raise NotPSDError(f"matrix is not PSD: min eigenvalue {w[0]:.3e}")
    return np.where(w < 0.0, 0.0, w)


def renyi_from_eigenvalues(w: np.ndarray, alpha: float) -> float:
    w = w[w > 0.0]  # 0**alpha := 0
    total = float(np.sum(w**alpha))
    if not total > 0.0:
        raise DegenerateInputError("spectrum has no positive eigenvalue")
    return math.log2(total) / (1.0 - alpha)


def entropy_eig(a, order: OrderLike, solver: str = "lapack") -> float:
    alpha = as_order(order).alpha
    return renyi_from_eigenvalues(spectrum(a, solver=solver), alpha)


def entropy_frob(a) -> float:
    """Order-2 entropy as -log2 of the squared Frobenius norm."""
    e = _square(a)
    f = float(np.sum(e * e))
    if not f > 0.0:
        raise DegenerateInputError("squared Frobenius norm is zero")
    return -math.log2(f)


def entropy(a, order: OrderLike = 2.0) -> float:
    """Dispatch to the Frobenius path at alpha=2, the eigenvalue path otherwise."""
    order = as_order(order)
    return entropy_frob(a) if order.is_two else entropy_eig(a, order)


def joint_entropy(mats: Sequence, order: OrderLike = 2.0) -> float:
    return entropy(hadamard_joint(mats), order)


def _same_size(*mats) -> None:
    sizes = {_square(m).shape for m in mats}
    if len(sizes) != 1:
        raise ShapeError(f"Gram matrices differ in size: {sorted(sizes)}")


def mutual_information(a, b, order: OrderLike = 2.0) -> float:
    _same_size(a, b)
    return entropy(a, order) + entropy(b, order) - joint_entropy([a, b], order)


def multivariate_mi(groups: Sequence, b, order: OrderLike = 2.0) -> float:
    """I(A_1, ..., A_k; B) = S(A_1..A_k) + S(B) - S(A_1..A_k, B)."""
    if len(groups) == 0:
        raise ContractError("multivariate_mi needs at least one group matrix")
    _same_size(*groups, b)
    return (
        joint_entropy(list(groups), order)
        + entropy(b, order)
        - joint_entropy([*groups, b], order)
    )


__all__ = [
    "EntropyOrder",
    "GramMatrix",
    "as_order",
    "entropy",
    "entropy_eig",
    "entropy_frob",
    "joint_entropy",
    "multivariate_mi",
    "mutual_information",
    "renyi_from_eigenvalues",
    "spectrum",
]
