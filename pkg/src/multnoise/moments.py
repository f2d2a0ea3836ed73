"""Exact first- and second-moment dynamics.

Second moments are carried in reduced (half-vectorized) form
``X~ = P1 vec(E[x x^T])`` of length ``n(n+1)/2``; inputs likewise as
``U~ = P2 vec(E[u u^T])``. The reduced recursion is

    X~[t+1] = (A~ + S~A) X~[t] + (B~ + S~B) U~[t] + K_BA W[t] + K_AB W'[t]

with ``W = vec(E[x u^T])`` and ``W' = vec(E[u x^T])``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .reshape import ReshapeSig, reshape_F, reshape_G, symmetry_maps, vec

EQUIV_TOL = 1e-10
PSD_REL_TOL = 1e-8


@dataclass(frozen=True, eq=False)
class LiftedOps:
    A: np.ndarray
    B: np.ndarray
    tildeA: np.ndarray  # N x N, N = n(n+1)/2
    tildeB: np.ndarray  # N x M, M = m(m+1)/2
    K_BA: np.ndarray  # N x nm
    K_AB: np.ndarray  # N x nm
    tildeSigmaA: np.ndarray
    tildeSigmaB: np.ndarray

    @property
    def n(self) -> int:
        return self.A.shape[0]

    @property
    def m(self) -> int:
        return self.B.shape[1]

    def with_noise(self, tildeSigmaA, tildeSigmaB) -> "LiftedOps":
        return LiftedOps(self.A, self.B, self.tildeA, self.tildeB, self.K_BA, self.K_AB,
                         np.asarray(tildeSigmaA, dtype=float), np.asarray(tildeSigmaB, dtype=float))


def lift_ops(A, B, tildeSigmaA=None, tildeSigmaB=None) -> LiftedOps:
    """Reduced second-moment operators of the nominal pair ``(A, B)``."""
    A = np.asarray(A, dtype=float)
    B = np.asarray(B, dtype=float).reshape(A.shape[0], -1)
    n, m = B.shape
    s1, s2 = symmetry_maps(n), symmetry_maps(m)
    tA = s1.P @ np.kron(A, A) @ s1.Q
    tB = s1.P @ np.kron(B, B) @ s2.Q
    K_BA = np.kron(B, A)[s1.keep]
    K_AB = np.kron(A, B)[s1.keep]
    N, M = s1.reduced_dim, s2.reduced_dim
    tSA = np.zeros((N, N)) if tildeSigmaA is None else np.asarray(tildeSigmaA, dtype=float)
    tSB = np.zeros((N, M)) if tildeSigmaB is None else np.asarray(tildeSigmaB, dtype=float).reshape(N, M)
    return LiftedOps(A, B, tA, tB, K_BA, K_AB, tSA, tSB)


def sigma_prime_from_cov(Sigma, sig) -> np.ndarray:
    """Map ``E[vec(N) vec(N)^T]`` to ``E[N (x) N]`` for a random matrix ``N``."""
    Sigma = np.asarray(Sigma, dtype=float)
    if np.abs(Sigma - Sigma.T).max(initial=0.0) > EQUIV_TOL * max(1.0, np.abs(Sigma).max(initial=0.0)):
        raise ValueError("covariance must be symmetric")
    return reshape_G(Sigma, sig)


def simplify_sigma(SigmaPrimeA, SigmaPrimeB, n: int, m: int) -> tuple[np.ndarray, np.ndarray]:
    s1, s2 = symmetry_maps(n), symmetry_maps(m)
    return s1.P @ np.asarray(SigmaPrimeA) @ s1.Q, s1.P @ np.asarray(SigmaPrimeB) @ s2.Q


def reduced_noise(model) -> tuple[np.ndarray, np.ndarray]:
    """The identifiable noise parameters ``(S~A, S~B)`` of a system model."""
    n, m = model.n, model.m
    SpA = sigma_prime_from_cov(model.SigmaA, ReshapeSig(n, n, n, n))
    SpB = sigma_prime_from_cov(model.SigmaB, ReshapeSig(n, m, n, m))
    return simplify_sigma(SpA, SpB, n, m)


def model_ops(model) -> LiftedOps:
    return lift_ops(model.A, model.B, *reduced_noise(model))


def propagate_first(A, B, mu0, nus) -> np.ndarray:
    """Means ``mu[0..l]`` of the state under input means ``nus[0..l-1]``."""
    A = np.asarray(A, dtype=float)
    B = np.asarray(B, dtype=float).reshape(A.shape[0], -1)
    nus = np.asarray(nus, dtype=float).reshape(-1, B.shape[1])
    mu = np.empty((len(nus) + 1, A.shape[0]))
    mu[0] = mu0
    for t, nu in enumerate(nus):
        mu[t + 1] = A @ mu[t] + B @ nu
    return mu


def propagate_second(ops: LiftedOps, X0, U_seq, W_seq, Wp_seq) -> np.ndarray:
    """Reduced second moments ``X~[0..l]`` from the reduced recursion."""
    U_seq = np.asarray(U_seq, dtype=float)
    W_seq = np.asarray(W_seq, dtype=float)
    Wp_seq = np.asarray(Wp_seq, dtype=float)
    if not len(U_seq) == len(W_seq) == len(Wp_seq):
        raise ValueError("input moment sequences must share a horizon")
    Ax = ops.tildeA + ops.tildeSigmaA
    Bx = ops.tildeB + ops.tildeSigmaB
    X = np.empty((len(U_seq) + 1, Ax.shape[0]))
    X[0] = X0
    for t in range(len(U_seq)):
        X[t + 1] = Ax @ X[t] + Bx @ U_seq[t] + ops.K_BA @ W_seq[t] + ops.K_AB @ Wp_seq[t]
    return X


def cross_moments(mu, nus) -> tuple[np.ndarray, np.ndarray]:
    """``W[t] = vec(mu[t] nu[t]^T)`` and ``W'[t] = vec(nu[t] mu[t]^T)`` for t < l.

    Valid because the inputs of a rollout are drawn independently of its state.
    """
    nus = np.asarray(nus, dtype=float)
    mu = np.asarray(mu, dtype=float)[: len(nus)]
    W = np.einsum("ti,tj->tji", mu, nus).reshape(len(nus), -1)  # column-major vec of mu nu^T
    Wp = np.einsum("ti,tj->tij", mu, nus).reshape(len(nus), -1)
    return W, Wp


def reduced_input_moments(nus, Ubars) -> np.ndarray:
    """``U~[t] = P2 vec(Ubar[t] + nu[t] nu[t]^T)``."""
    nus = np.asarray(nus, dtype=float)
    S = np.asarray(Ubars, dtype=float) + np.einsum("ti,tj->tij", nus, nus)
    s2 = symmetry_maps(nus.shape[1])
    return s2.eliminate(S.transpose(0, 2, 1).reshape(len(nus), -1))


def reduced_outer(x) -> np.ndarray:
    """``P1 vec(x x^T)`` along the last axis."""
    x = np.asarray(x, dtype=float)
    n = x.shape[-1]
    s1 = symmetry_maps(n)
    rows, cols = s1.keep % n, s1.keep // n
    return x[..., rows] * x[..., cols]


def unreduce(Xr, n: int) -> np.ndarray:
    """Symmetric ``n x n`` matrix from its reduced vector."""
    s1 = symmetry_maps(n)
    full = s1.duplicate(np.asarray(Xr, dtype=float))
    return full.reshape(*full.shape[:-1], n, n).swapaxes(-1, -2)


@dataclass(frozen=True, eq=False)
class MomentTrajectory:
    mu: np.ndarray  # (l+1, n)
    X: np.ndarray  # (l+1, N)
    W: np.ndarray  # (l, nm)
    Wp: np.ndarray  # (l, nm)
    U: np.ndarray  # (l, M)

    @property
    def horizon(self) -> int:
        return len(self.U)


def analytic_moments(ops: LiftedOps, mu0, Xbar0, nus, Ubars) -> MomentTrajectory:
    """Propagate exact moments from ``E[x0] = mu0`` and ``E[x0 x0^T] = Xbar0``."""
    mu = propagate_first(ops.A, ops.B, mu0, nus)
    W, Wp = cross_moments(mu, nus)
    U = reduced_input_moments(nus, Ubars)
    X0 = symmetry_maps(ops.n).eliminate(vec(np.asarray(Xbar0, dtype=float)))
    X = propagate_second(ops, X0, U, W, Wp)
    return MomentTrajectory(mu, X, W, Wp, U)


def is_psd(S, rel_tol: float = PSD_REL_TOL) -> bool:
    S = np.asarray(S, dtype=float)
    S = (S + S.T) / 2
    w = np.linalg.eigvalsh(S)
    scale = max(abs(float(np.trace(S))), float(np.abs(w).max(initial=0.0)), 1e-300)
    return bool(w.min(initial=0.0) >= -rel_tol * scale)


def equivalence_class_check(S1A, S1B, S2A, S2B, n: int, m: int) -> bool:
    """True when two ``(Sigma'_A, Sigma'_B)`` pairs reduce to the same ``(S~A, S~B)``
    and both pairs reshape to positive semidefinite covariances."""
    r1 = simplify_sigma(S1A, S1B, n, m)
    r2 = simplify_sigma(S2A, S2B, n, m)
    for a, b in zip(r1, r2):
        if np.abs(a - b).max(initial=0.0) > EQUIV_TOL:
            return False
    for SA, SB in ((S1A, S1B), (S2A, S2B)):
        if not (is_psd(reshape_F(SA, (n, n, n, n)), 1e-10) and is_psd(reshape_F(SB, (n, m, n, m)), 1e-10)):
            return False
    return True
