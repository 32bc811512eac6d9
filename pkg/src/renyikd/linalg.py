"""Cyclic Jacobi eigensolver for dense symmetric matrices.

Rotations are applied in round-robin (tournament) order so that each round
is a set of n/2 disjoint (p, q) pairs; one round is then a handful of
vectorised row/column updates.
"""

from __future__ import annotations

import numpy as np

from .errors import NumericError, ShapeError


def _tournament(m: int) -> list[tuple[np.ndarray, np.ndarray]]:
    """All m-1 rounds of disjoint pairs for an even player count m."""
    order = list(range(m))
    rounds = []
    for _ in range(m - 1):
        p = np.array([order[i] for i in range(m // 2)])
        q = np.array([order[m - 1 - i] for i in range(m // 2)])
        rounds.append((np.minimum(p, q), np.maximum(p, q)))
        order = [order[0], order[-1], *order[1:-1]]
    return rounds


def off_diagonal_norm(a: np.ndarray) -> float:
    off = a - np.diag(np.diag(a))
    return float(np.sqrt(np.sum(off * off)))


def jacobi_eigh(
    a: np.ndarray, tol: float = 1e-12, max_sweeps: int = 100, vectors: bool = False
):
    """Eigenvalues (ascending) of symmetric ``a``; with ``vectors=True`` also the eigenvector matrix.

    Converged when the off-diagonal Frobenius norm drops below
    ``tol * max(1, ||a||_F)``.
    """
    a = np.array(a, dtype=np.float64)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ShapeError(f"jacobi_eigh needs a square matrix, got {a.shape}")
    n = a.shape[0]
    v = np.eye(n) if vectors else None
    if n <= 1:
        return (np.diag(a).copy(), v) if vectors else np.diag(a).copy()

    m = n + (n % 2)
    rounds = []
    for p, q in _tournament(m):
        keep = q < n  # drop the phantom player when n is odd
        rounds.append((p[keep], q[keep]))

    threshold = tol * max(1.0, float(np.linalg.norm(a)))
    for _ in range(max_sweeps):
        if off_diagonal_norm(a) < threshold:
            break
        for p, q in rounds:
            apq = a[p, q]
            active = apq != 0.0
            if not np.any(active):
                continue
            p, q, apq = p[active], q[active], apq[active]
            theta = (a[q, q] - a[p, p]) / (2.0 * apq)
            big = np.abs(theta) > 1e150
            theta_s = np.where(big, 1.0, theta)
            t = np.sign(theta_s) / (np.abs(theta_s) + np.sqrt(theta_s * theta_s + 1.0))
            t = np.where(big, 0.5 / np.where(big, theta, 1.0), t)
            t[theta == 0.0] = 1.0
            c = 1.0 / np.sqrt(t * t + 1.0)
            s = t * c

            rp, rq = a[p, :], a[q, :]
            a[p, :] = c[:, None] * rp - s[:, None] * rq
            a[q, :] = s[:, None] * rp + c[:, None] * rq
            cp, cq = a[:, p], a[:, q]
            a[:, p] = cp * c - cq * s
            a[:, q] = cp * s + cq * c
            if v is not None:
                vp, vq = v[:, p], v[:, q]
                v[:, p] = vp * c - vq * s
                v[:, q] = vp * s + vq * c
    else:
        if off_diagonal_norm(a) >= threshold:
            raise NumericError(f"Jacobi did not converge in {max_sweeps} sweeps")

    w = np.diag(a).copy()
    idx = np.argsort(w, kind="stable")
    if vectors:
        return w[idx], v[:, idx]
    return w[idx]
