"""Full covariances consistent with identified noise parameters.

Second moments only pin down ``(S~A, S~B)``. Every member of

    SigmaA(alpha) = F(Q1 S~A Q3^T + E_alpha),  SigmaB(beta) = F(Q1 S~B Q4^T + E_beta)

produces the same second-moment dynamics. ``Q3 = Dn Q1`` where ``Dn`` halves
the off-diagonal vec positions, and ``E_alpha`` is a sum of signed rank-one
terms that the elimination map cannot see.
"""
from __future__ import annotations

from dataclasses import dataclass
from itertools import combinations

import numpy as np

from .reshape import ReshapeSig, reshape_F, symmetry_maps


def pairs(n: int) -> list[tuple[int, int]]:
    """Index pairs ``i < j`` (0-based) in lexicographic order."""
    return list(combinations(range(n), 2))


def halving_matrix(n: int) -> np.ndarray:
    """Diagonal ``Dn`` with 1/2 at vec positions of off-diagonal entries."""
    d = np.ones(n * n)
    for i, j in pairs(n):
        d[i * n + j] = d[j * n + i] = 0.5
    return np.diag(d)


def _antisym(n: int, i: int, j: int) -> np.ndarray:
    v = np.zeros(n * n)
    v[i * n + j] = 1.0
    v[j * n + i] = -1.0
    return v


def _generators(n: int, m: int) -> np.ndarray:
    """``(e_ij - e_ji)(f_kl - f_lk)^T`` for every pair of pairs, stacked."""
    rows, cols = pairs(n), pairs(m)
    if not rows or not cols:
        return np.zeros((0, n * n, m * m))
    return np.stack([np.outer(_antisym(n, i, j), _antisym(m, k, l)) for i, j in rows for k, l in cols])


def _coeffs(params, n: int, m: int, name: str) -> np.ndarray:
    keys = [(a, b) for a in pairs(n) for b in pairs(m)]
    if params is None:
        return np.zeros(len(keys))
    if isinstance(params, dict):
        index = {k: t for t, k in enumerate(keys)}
        out = np.zeros(len(keys))
        for key, val in params.items():
            (i, j), (k, l) = key
            t = index.get(((int(i), int(j)), (int(k), int(l))))
            if t is None:
                raise KeyError(f"{name} key {key} is not of the form ((i<j), (k<l))")
            out[t] = float(val)
        return out
    arr = np.asarray(params, dtype=float).reshape(-1)
    if arr.size != len(keys):
        raise ValueError(f"{name} needs {len(keys)} coefficients, got {arr.size}")
    return arr


@dataclass(frozen=True, eq=False)
class CovarianceFamily:
    """Affine family ``Sigma(c) = base + sum_p c_p gen_p`` in covariance layout."""

    base: np.ndarray  # n^2 x n^2 or nm x nm
    generators: np.ndarray  # (k, same shape)
    keys: tuple  # ((i, j), (k, l)) per generator

    def __call__(self, coeffs=None) -> np.ndarray:
        if coeffs is None or len(self.keys) == 0:
            return self.base.copy()
        c = np.asarray(coeffs, dtype=float).reshape(-1)
        return self.base + np.tensordot(c, self.generators, axes=1)

    @property
    def dim(self) -> int:
        return len(self.keys)


def family_A(tildeSigmaA, n: int) -> CovarianceFamily:
    s = symmetry_maps(n)
    sig = ReshapeSig(n, n, n, n)
    Q3 = halving_matrix(n) @ s.Q
    base = reshape_F(s.Q @ np.asarray(tildeSigmaA, dtype=float) @ Q3.T, sig)
    gens = np.stack([reshape_F(E, sig) for E in _generators(n, n)]) if pairs(n) else np.zeros((0,) + base.shape)
    keys = tuple((a, b) for a in pairs(n) for b in pairs(n))
    return CovarianceFamily(base, gens, keys)


def family_B(tildeSigmaB, n: int, m: int) -> CovarianceFamily:
    s1, s2 = symmetry_maps(n), symmetry_maps(m)
    sig = ReshapeSig(n, m, n, m)
    Q4 = halving_matrix(m) @ s2.Q
    base = reshape_F(s1.Q @ np.asarray(tildeSigmaB, dtype=float) @ Q4.T, sig)
    E = _generators(n, m)
    gens = np.stack([reshape_F(g, sig) for g in E]) if len(E) else np.zeros((0,) + base.shape)
    keys = tuple((a, b) for a in pairs(n) for b in pairs(m))
    return CovarianceFamily(base, gens, keys)


def covariance_family(tildeSigmaA, tildeSigmaB, alpha=None, beta=None, n: int | None = None, m: int | None = None):
    """``(SigmaA(alpha), SigmaB(beta))``.

    ``alpha`` maps ``((i, j), (k, l))`` with ``i < j`` and ``k < l`` (0-based,
    over n) to a coefficient, or is a flat vector in the order of
    ``family_A(...).keys``; ``beta`` likewise with ``(k, l)`` over m.
    """
    tSA = np.asarray(tildeSigmaA, dtype=float)
    tSB = np.asarray(tildeSigmaB, dtype=float)
    if n is None:
        n = int(round((np.sqrt(8 * tSA.shape[0] + 1) - 1) / 2))
    if m is None:
        m = int(round((np.sqrt(8 * tSB.shape[1] + 1) - 1) / 2))
    fa, fb = family_A(tSA, n), family_B(tSB, n, m)
    return fa(_coeffs(alpha, n, n, "alpha")), fb(_coeffs(beta, n, m, "beta"))


def _min_eig(S: np.ndarray):
    w, V = np.linalg.eigh((S + S.T) / 2)
    return w[0], V[:, 0]


def psd_select(family: CovarianceFamily, search_budget: int = 500, tol: float = 1e-8):
    """A positive semidefinite member of ``family``, or ``None``.

    Maximizes the smallest eigenvalue over the coefficients by supergradient
    ascent (the objective is concave because the family is affine) and stops
    as soon as it clears ``-tol``.
    """
    c = np.zeros(family.dim)
    S = family(c)
    lam, v = _min_eig(S)
    if lam >= -tol:
        return S
    if family.dim == 0:
        return None
    scale = max(float(np.abs(family.base).max()), 1e-300)
    best_lam, best = lam, S
    for it in range(search_budget):
        g = np.einsum("i,kij,j->k", v, family.generators, v)
        gn = np.linalg.norm(g)
        if gn == 0:
            break
        c = c + (scale / np.sqrt(it + 1)) * g / gn
        S = family(c)
        lam, v = _min_eig(S)
        if lam > best_lam:
            best_lam, best = lam, S
        if lam >= -tol:
            return S
    return best if best_lam >= -tol else None
