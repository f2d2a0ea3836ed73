"""SVD-based least squares with a numerical-rank cutoff."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class RankCertificate:
    matrix_name: str
    required_rank: int
    computed_rank: int
    min_singular_value: float
    full_rank: bool

    def to_dict(self) -> dict:
        return {
            "matrix_name": self.matrix_name,
            "required_rank": int(self.required_rank),
            "computed_rank": int(self.computed_rank),
            "min_singular_value": float(self.min_singular_value),
            "full_rank": bool(self.full_rank),
        }


def rank_tolerance(svals: np.ndarray, shape: tuple[int, int]) -> float:
    if svals.size == 0:
        return 0.0
    return max(shape) * np.finfo(float).eps * float(svals[0])


def certificate(name: str, svals: np.ndarray, shape: tuple[int, int]) -> RankCertificate:
    """Full-row-rank certificate from the singular values of a ``shape`` matrix."""
    rows = shape[0]
    tol = rank_tolerance(svals, shape)
    rank = int(np.count_nonzero(svals > tol)) if svals.size and svals[0] > 0 else 0
    smin = float(svals[rows - 1]) if svals.size >= rows else 0.0
    return RankCertificate(name, rows, rank, smin, rank == rows)


def regress(Y: np.ndarray, Z: np.ndarray, name: str = "Z"):
    """Return ``Y Z^T (Z Z^T)^+`` and a row-rank certificate for ``Z``.

    Uses ``Z = U S V^T`` so the product reduces to ``Y V S^-1 U^T`` over the
    singular values above the rank cutoff.
    """
    Y = np.atleast_2d(np.asarray(Y, dtype=float))
    Z = np.atleast_2d(np.asarray(Z, dtype=float))
    U, s, Vt = np.linalg.svd(Z, full_matrices=False)
    tol = rank_tolerance(s, Z.shape)
    keep = s > tol if s.size and s[0] > 0 else np.zeros_like(s, dtype=bool)
    theta = ((Y @ Vt[keep].T) / s[keep]) @ U[:, keep].T
    return theta, certificate(name, s, Z.shape)


class StackedLeastSquares:
    """Streaming least squares ``min ||R x - c||`` over row blocks.

    Row blocks are folded into a triangular factor with successive QR
    updates, so the full regressor never has to be held in memory.
    """

    def __init__(self, n_cols: int):
        self.n_cols = n_cols
        self.n_rows = 0
        self._R = np.zeros((0, n_cols))
        self._qtc = np.zeros(0)

    def add(self, rows: np.ndarray, rhs: np.ndarray) -> None:
        rows = np.asarray(rows, dtype=float).reshape(-1, self.n_cols)
        rhs = np.asarray(rhs, dtype=float).reshape(-1)
        if rows.shape[0] != rhs.size:
            raise ValueError("row block and right-hand side disagree in length")
        Q, R = np.linalg.qr(np.vstack([self._R, rows]))
        self._qtc = Q.T @ np.concatenate([self._qtc, rhs])
        self._R = R
        self.n_rows += rows.shape[0]

    def solve(self, name: str = "D"):
        """Minimum-norm solution and a certificate that the regressor has full column rank."""
        U, s, Vt = np.linalg.svd(self._R, full_matrices=False)
        shape = (self.n_cols, self.n_rows)
        tol = rank_tolerance(s, shape)
        keep = s > tol if s.size and s[0] > 0 else np.zeros_like(s, dtype=bool)
        x = Vt[keep].T @ ((U[:, keep].T @ self._qtc) / s[keep])
        # the regressor enters transposed, so its columns are the certified rows
        padded = np.zeros(self.n_cols)
        padded[: s.size] = s
        return x, certificate(name, padded, shape)
