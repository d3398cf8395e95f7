"""Symmetric eigen-decomposition by Jacobi rotations.

Sweeps use a round-robin ordering: each round pairs every index with one
partner, so all rotations of a round touch disjoint rows/columns and are
applied together as vectorized column and row updates.
"""

from __future__ import annotations

import numpy as np
from loguru import logger

from src.errors import NotSymmetric


SYMMETRY_TOL = 1e-9


def _round_robin(n: int) -> list[tuple[np.ndarray, np.ndarray]]:
    m = n + (n % 2)
    players = list(range(m))
    rounds = []
    for _ in range(m - 1):
        pairs = [(players[i], players[m - 1 - i]) for i in range(m // 2)]
        pairs = [(min(a, b), max(a, b)) for a, b in pairs if a < n and b < n]
        rounds.append((np.array([a for a, _ in pairs], dtype=int), np.array([b for _, b in pairs], dtype=int)))
        players = [players[0]] + [players[-1]] + players[1:-1]
    return rounds


def jacobi_eigh(A, tol: float = 1e-10, max_sweeps: int = 100) -> tuple[np.ndarray, np.ndarray]:
    """Eigenvalues ascending and eigenvectors as columns."""
    A = np.array(A, dtype="float64")
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise NotSymmetric(f"Expected a square matrix, got shape {A.shape}")
    asym = float(np.max(np.abs(A - A.T))) if A.size else 0.0
    if asym > SYMMETRY_TOL:
        raise NotSymmetric(f"Matrix is not symmetric: max |A - A^T| = {asym:.3g}")
    A = (A + A.T) / 2.0
    n = A.shape[0]
    V = np.eye(n)

    rounds = _round_robin(n) if n > 1 else []
    sweeps = 0
    while sweeps < max_sweeps and off_diagonal_norm(A) >= tol:
        for P, Q in rounds:
            apq = A[P, Q]
            active = np.abs(apq) > 0
            if not active.any():
                continue
            P, Q, apq = P[active], Q[active], apq[active]
            theta = (A[Q, Q] - A[P, P]) / (2.0 * apq)
            sign = np.where(theta >= 0, 1.0, -1.0)
            t = sign / (np.abs(theta) + np.sqrt(theta * theta + 1.0))
            c = 1.0 / np.sqrt(t * t + 1.0)
            s = t * c

            cp, cq = A[:, P].copy(), A[:, Q].copy()
            A[:, P] = c * cp - s * cq
            A[:, Q] = s * cp + c * cq
            rp, rq = A[P, :].copy(), A[Q, :].copy()
            A[P, :] = c[:, None] * rp - s[:, None] * rq
            A[Q, :] = s[:, None] * rp + c[:, None] * rq
            vp, vq = V[:, P].copy(), V[:, Q].copy()
            V[:, P] = c * vp - s * vq
            V[:, Q] = s * vp + c * vq
        sweeps += 1

    if off_diagonal_norm(A) >= tol:
        logger.warning(f"Jacobi did not converge: sweeps={sweeps} off={off_diagonal_norm(A):.3g}")

    values = np.diag(A).copy()
    order = np.argsort(values, kind="stable")
    values, V = values[order], V[:, order]
    # sign convention: largest-magnitude entry of each vector is positive
    pivots = np.argmax(np.abs(V), axis=0)
    V = V * np.where(V[pivots, np.arange(n)] < 0, -1.0, 1.0)
    return values, V


def off_diagonal_norm(A: np.ndarray) -> float:
    mask = ~np.eye(A.shape[0], dtype=bool)
    return float(np.sqrt(np.sum(A[mask] ** 2)))
