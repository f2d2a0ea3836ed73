"""Vectorization, Kronecker products and the block reshaping operators.

All vectorization is column-major: ``vec(M)[j*rows + i] == M[i, j]``.
Vectors are returned as 1-D arrays.

The reshaping pair ``reshape_F`` / ``reshape_G`` moves between the
``A (x) A`` layout and the ``vec(A) vec(A)^T`` layout of a block matrix.
Both are pure index permutations (no arithmetic), so round trips are exact.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np


@dataclass(frozen=True)
class ReshapeSig:
    """Block structure of an ``(m*p) x (n*q)`` matrix: m x n blocks, each p x q."""

    m: int
    n: int
    p: int
    q: int

    def __post_init__(self):
        for name in ("m", "n", "p", "q"):
            if int(getattr(self, name)) < 1:
                raise ValueError(f"ReshapeSig.{name} must be >= 1")

    @property
    def block_shape(self) -> tuple[int, int]:
        return (self.m * self.p, self.n * self.q)

    @property
    def flat_shape(self) -> tuple[int, int]:
        return (self.m * self.n, self.p * self.q)


def _as_sig(sig) -> ReshapeSig:
    return sig if isinstance(sig, ReshapeSig) else ReshapeSig(*sig)


def vec(M) -> np.ndarray:
    """Stack the columns of ``M`` into a 1-D array."""
    M = np.asarray(M)
    if M.ndim == 1:
        return M.copy()
    return M.reshape(-1, order="F")


def unvec(v, p: int, q: int) -> np.ndarray:
    """Inverse of :func:`vec` for a ``p x q`` matrix."""
    v = np.asarray(v)
    if v.ndim == 2 and v.shape[1] == 1:
        v = v[:, 0]
    if v.ndim != 1 or v.size != p * q:
        raise ValueError(f"cannot unvec array of shape {v.shape} into {p}x{q}")
    return v.reshape(p, q, order="F")


def kron(A, B) -> np.ndarray:
    return np.kron(np.asarray(A), np.asarray(B))


def reshape_F(B, sig) -> np.ndarray:
    """Rearrange a block matrix so row ``j*m + i`` is ``vec(B_ij)``.

    ``reshape_F(kron(A, A), (m, n, m, n)) == outer(vec(A), vec(A))`` for
    ``A`` of shape ``m x n``.
    """
    sig = _as_sig(sig)
    B = np.asarray(B)
    if B.shape != sig.block_shape:
        raise ValueError(f"expected shape {sig.block_shape} for {sig}, got {B.shape}")
    m, n, p, q = sig.m, sig.n, sig.p, sig.q
    # B[i*p + r, j*q + s] -> out[j*m + i, s*p + r]
    return B.reshape(m, p, n, q).transpose(2, 0, 3, 1).reshape(m * n, p * q)


def reshape_G(B, sig) -> np.ndarray:
    """Inverse of :func:`reshape_F`: rebuild the block matrix from its rows."""
    sig = _as_sig(sig)
    B = np.asarray(B)
    if B.shape != sig.flat_shape:
        raise ValueError(f"expected shape {sig.flat_shape} for {sig}, got {B.shape}")
    m, n, p, q = sig.m, sig.n, sig.p, sig.q
    return B.reshape(n, m, q, p).transpose(1, 3, 0, 2).reshape(m * p, n * q)


@dataclass(frozen=True)
class SymmetryMaps:
    """Elimination (P), duplication (Q) and symmetrization (T) matrices.

    ``P @ vec(S)`` keeps the lower triangle of a symmetric ``S`` (entries
    ``S[i, j]`` with ``i >= j``) in vec order; ``Q`` copies each kept entry
    back into both symmetric positions; ``T = Q @ P``.
    """

    dim: int
    P: np.ndarray
    Q: np.ndarray
    T: np.ndarray
    keep: np.ndarray  # full index of each reduced entry
    fold: np.ndarray  # reduced index of each full entry

    @property
    def reduced_dim(self) -> int:
        return self.dim * (self.dim + 1) // 2

    def eliminate(self, v) -> np.ndarray:
        """``P @ v`` along the last axis."""
        return np.asarray(v)[..., self.keep]

    def duplicate(self, w) -> np.ndarray:
        """``Q @ w`` along the last axis."""
        return np.asarray(w)[..., self.fold]


@lru_cache(maxsize=None)
def symmetry_maps(n: int) -> SymmetryMaps:
    if n < 1:
        raise ValueError("dimension must be >= 1")
    full = n * n
    # vec index of S[i, j] is j*n + i; rows with i < j are the ones dropped
    keep = np.array([j * n + i for j in range(n) for i in range(n) if i >= j])
    reduced_of = {int(k): r for r, k in enumerate(keep)}
    fold = np.empty(full, dtype=np.intp)
    T = np.eye(full)
    for j in range(n):
        for i in range(n):
            if i >= j:
                fold[j * n + i] = reduced_of[j * n + i]
            else:
                fold[j * n + i] = reduced_of[i * n + j]
                T[j * n + i] = 0.0
                T[j * n + i, i * n + j] = 1.0
    P = np.eye(full)[keep]
    Q = np.eye(len(keep))[fold]
    for arr in (P, Q, T, keep, fold):
        arr.setflags(write=False)
    return SymmetryMaps(dim=n, P=P, Q=Q, T=T, keep=keep, fold=fold)
