"""Linear systems with multiplicative noise and their Monte-Carlo simulation.

The model is

    x[t+1] = (A + Abar[t]) x[t] + (B + Bbar[t]) u[t]

with ``vec(Abar[t])`` and ``vec(Bbar[t])`` zero-mean, independent across time
and of each other, with covariances ``SigmaA`` (n^2 x n^2) and ``SigmaB``
(nm x nm). Noise is sampled as a Gaussian through the eigendecomposition of
each covariance; the estimators never rely on Gaussianity.
"""
from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterator, Sequence

import networkx as nx
import numpy as np

from .reshape import ReshapeSig, reshape_G, unvec, vec
from .rng import rollout_stream, substream

PSD_TOL = 1e-10
EXPLOSION_LIMIT = 1e150


class ExplosionError(FloatingPointError):
    """A simulated state exceeded the overflow guard."""


def _psd_factor(S: np.ndarray, tol: float = PSD_TOL) -> np.ndarray:
    """Return ``L`` with ``L @ L.T == S``, keeping only positive eigen-directions."""
    w, V = np.linalg.eigh(S)
    scale = max(1.0, float(np.abs(w).max(initial=0.0)))
    if w.size and w.min() < -tol * scale:
        raise ValueError(f"matrix is not positive semidefinite (min eigenvalue {w.min():.3e})")
    pos = w > tol * scale
    return V[:, pos] * np.sqrt(w[pos])


def _check_cov(name: str, S: np.ndarray, dim: int) -> np.ndarray:
    S = np.array(S, dtype=float)
    if S.shape != (dim, dim):
        raise ValueError(f"{name} must have shape {(dim, dim)}, got {S.shape}")
    if not np.all(np.isfinite(S)):
        raise ValueError(f"{name} has non-finite entries")
    if np.abs(S - S.T).max(initial=0.0) > PSD_TOL * max(1.0, np.abs(S).max(initial=0.0)):
        raise ValueError(f"{name} is not symmetric")
    S = (S + S.T) / 2
    w = np.linalg.eigvalsh(S)
    if w.size and w.min() < -PSD_TOL * max(1.0, np.abs(w).max()):
        raise ValueError(f"{name} is not positive semidefinite (min eigenvalue {w.min():.3e})")
    return S


@dataclass(frozen=True, eq=False)
class SystemModel:
    A: np.ndarray
    B: np.ndarray
    SigmaA: np.ndarray
    SigmaB: np.ndarray

    def __post_init__(self):
        A = np.array(self.A, dtype=float)
        B = np.array(self.B, dtype=float)
        if B.ndim == 1:
            B = B[:, None]
        if A.ndim != 2 or A.shape[0] != A.shape[1]:
            raise ValueError(f"A must be square, got shape {A.shape}")
        if B.ndim != 2 or B.shape[0] != A.shape[0]:
            raise ValueError(f"B must have {A.shape[0]} rows, got shape {B.shape}")
        if not (np.all(np.isfinite(A)) and np.all(np.isfinite(B))):
            raise ValueError("A and B must be finite")
        n, m = B.shape
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "B", B)
        object.__setattr__(self, "SigmaA", _check_cov("SigmaA", self.SigmaA, n * n))
        object.__setattr__(self, "SigmaB", _check_cov("SigmaB", self.SigmaB, n * m))

    @property
    def n(self) -> int:
        return self.A.shape[0]

    @property
    def m(self) -> int:
        return self.B.shape[1]

    @cached_property
    def factor_A(self) -> np.ndarray:
        """``(n^2, kA)`` factor with ``factor_A @ factor_A.T == SigmaA``."""
        return _psd_factor(self.SigmaA)

    @cached_property
    def factor_B(self) -> np.ndarray:
        return _psd_factor(self.SigmaB)

    @cached_property
    def directions_A(self) -> np.ndarray:
        """Factor columns reshaped to ``(kA, n, n)`` noise matrices."""
        n = self.n
        return np.stack([unvec(c, n, n) for c in self.factor_A.T]) if self.factor_A.size else np.zeros((0, n, n))

    @cached_property
    def directions_B(self) -> np.ndarray:
        n, m = self.n, self.m
        return np.stack([unvec(c, n, m) for c in self.factor_B.T]) if self.factor_B.size else np.zeros((0, n, m))

    @classmethod
    def noiseless(cls, A, B) -> "SystemModel":
        A = np.asarray(A, dtype=float)
        B = np.asarray(B, dtype=float).reshape(A.shape[0], -1)
        n, m = B.shape
        return cls(A, B, np.zeros((n * n, n * n)), np.zeros((n * m, n * m)))


def simple_example_system() -> SystemModel:
    """The two-state, one-input benchmark system."""
    A = np.array([[-0.2, 0.3], [-0.4, 0.8]])
    B = np.array([[-1.8], [-0.8]])
    SigmaA = np.array([
        [8.0, -2.0, 0.0, 0.0],
        [-2.0, 16.0, 2.0, 0.0],
        [0.0, 2.0, 2.0, 0.0],
        [0.0, 0.0, 0.0, 8.0],
    ]) / 100
    SigmaB = np.array([[5.0, -2.0], [-2.0, 20.0]]) / 100
    return SystemModel(A, B, SigmaA, SigmaB)


@dataclass(frozen=True, eq=False)
class EigenNoise:
    """Noise written as ``Abar = sum_i A_i p_i``, ``Bbar = sum_j B_j q_j``.

    ``p_i`` and ``q_j`` are independent scalars with variances ``variancesA[i]``
    and ``variancesB[j]``.
    """

    directionsA: np.ndarray  # (r, n, n)
    variancesA: np.ndarray  # (r,)
    directionsB: np.ndarray  # (s, n, m)
    variancesB: np.ndarray  # (s,)

    def __post_init__(self):
        dA = np.asarray(self.directionsA, dtype=float)
        dB = np.asarray(self.directionsB, dtype=float)
        vA = np.asarray(self.variancesA, dtype=float).reshape(-1)
        vB = np.asarray(self.variancesB, dtype=float).reshape(-1)
        if dA.ndim != 3 or dA.shape[1] != dA.shape[2]:
            raise ValueError(f"directionsA must have shape (r, n, n), got {dA.shape}")
        if dB.ndim != 3 or dB.shape[1] != dA.shape[1]:
            raise ValueError(f"directionsB must have shape (s, n, m), got {dB.shape}")
        if len(vA) != len(dA) or len(vB) != len(dB):
            raise ValueError("number of directions and variances differ")
        if np.any(vA < 0) or np.any(vB < 0):
            raise ValueError("variances must be nonnegative")
        for name, val in (("directionsA", dA), ("directionsB", dB), ("variancesA", vA), ("variancesB", vB)):
            object.__setattr__(self, name, val)

    @property
    def r(self) -> int:
        return len(self.variancesA)

    @property
    def s(self) -> int:
        return len(self.variancesB)


def cov_from_eigen(e: EigenNoise) -> tuple[np.ndarray, np.ndarray]:
    n, m = e.directionsA.shape[1], e.directionsB.shape[2]
    VA = np.stack([vec(D) for D in e.directionsA], axis=1) if e.r else np.zeros((n * n, 0))
    VB = np.stack([vec(D) for D in e.directionsB], axis=1) if e.s else np.zeros((n * m, 0))
    return (VA * e.variancesA) @ VA.T, (VB * e.variancesB) @ VB.T


def model_from_eigen(A, B, e: EigenNoise) -> SystemModel:
    SigmaA, SigmaB = cov_from_eigen(e)
    return SystemModel(A, B, SigmaA, SigmaB)


def sample_noise_pair(model: SystemModel, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    """Draw one ``(Abar, Bbar)`` pair."""
    n, m = model.n, model.m
    FA, FB = model.factor_A, model.factor_B
    Abar = unvec(FA @ rng.standard_normal(FA.shape[1]), n, n) if FA.shape[1] else np.zeros((n, n))
    Bbar = unvec(FB @ rng.standard_normal(FB.shape[1]), n, m) if FB.shape[1] else np.zeros((n, m))
    return Abar, Bbar


@dataclass(frozen=True, eq=False)
class Rollout:
    states: np.ndarray  # (l+1, n)
    inputs: np.ndarray  # (l, m)

    def __post_init__(self):
        if len(self.states) != len(self.inputs) + 1:
            raise ValueError("a rollout needs exactly one more state than inputs")


@dataclass(frozen=True, eq=False)
class RolloutBatch:
    states: np.ndarray  # (n_r, l+1, n)
    inputs: np.ndarray  # (n_r, l, m)
    start: int = 0  # global index of the first rollout

    @property
    def n_rollouts(self) -> int:
        return self.states.shape[0]

    @property
    def horizon(self) -> int:
        return self.states.shape[1] - 1

    def __getitem__(self, k) -> Rollout:
        return Rollout(self.states[k], self.inputs[k])

    @classmethod
    def concat(cls, batches: Sequence["RolloutBatch"]) -> "RolloutBatch":
        return cls(
            np.concatenate([b.states for b in batches]),
            np.concatenate([b.inputs for b in batches]),
            batches[0].start if batches else 0,
        )


def _guard(x: np.ndarray, t: int) -> None:
    peak = np.abs(x).max(initial=0.0)
    if not peak <= EXPLOSION_LIMIT:
        raise ExplosionError(f"state norm exceeded {EXPLOSION_LIMIT:g} at step {t}")


def simulate_rollout(model: SystemModel, x0, inputs, rng: np.random.Generator) -> Rollout:
    """Run the noisy recursion once, drawing a fresh noise pair every step."""
    x = np.array(x0, dtype=float).reshape(model.n)
    U = np.asarray(inputs, dtype=float).reshape(-1, model.m)
    if not (np.all(np.isfinite(x)) and np.all(np.isfinite(U))):
        raise ValueError("initial state and inputs must be finite")
    states = np.empty((len(U) + 1, model.n))
    states[0] = x
    for t, u in enumerate(U):
        Abar, Bbar = sample_noise_pair(model, rng)
        x = (model.A + Abar) @ x + (model.B + Bbar) @ u
        _guard(x, t + 1)
        states[t + 1] = x
    return Rollout(states, U.copy())


@dataclass(frozen=True, eq=False)
class InitialState:
    """Gaussian initial-state distribution ``N(mean, cov)``."""

    mean: np.ndarray
    cov: np.ndarray

    @classmethod
    def standard(cls, n: int) -> "InitialState":
        return cls(np.zeros(n), np.eye(n))

    @cached_property
    def factor(self) -> np.ndarray:
        n = len(self.mean)
        L = _psd_factor(np.asarray(self.cov, dtype=float))
        out = np.zeros((n, n))
        out[:, : L.shape[1]] = L
        return out

    @property
    def second_moment(self) -> np.ndarray:
        mu = np.asarray(self.mean, dtype=float)
        return np.asarray(self.cov, dtype=float) + np.outer(mu, mu)


def _simulate_block(model, schedule, ks, seed, initial, time_chunk) -> RolloutBatch:
    # Per-rollout stream layout: n draws for x0, then for each step t the
    # row [m input draws | kA noise draws | kB noise draws].
    n, m, ell = model.n, model.m, schedule.horizon
    kA, kB = model.factor_A.shape[1], model.factor_B.shape[1]
    width = m + kA + kB
    gens = [rollout_stream(seed, k) for k in ks]
    nb = len(gens)
    A, B = model.A, model.B
    MA = model.directions_A.reshape(kA * n, n)
    MB = model.directions_B.reshape(kB * n, m)
    nus, Ufac = schedule.nus, schedule.input_factors

    x = np.asarray(initial.mean, dtype=float) + np.stack([g.standard_normal(n) for g in gens]) @ initial.factor.T
    states = np.empty((nb, ell + 1, n))
    inputs = np.empty((nb, ell, m))
    states[:, 0] = x
    for t0 in range(0, ell, time_chunk):
        span = min(time_chunk, ell - t0)
        Z = np.stack([g.standard_normal((span, width)) for g in gens])
        for dt in range(span):
            t = t0 + dt
            z = Z[:, dt]
            u = nus[t] + z[:, :m] @ Ufac[t].T
            xn = x @ A.T + u @ B.T
            if kA:
                xn += np.einsum("kc,kci->ki", z[:, m : m + kA], (x @ MA.T).reshape(nb, kA, n))
            if kB:
                xn += np.einsum("kc,kci->ki", z[:, m + kA :], (u @ MB.T).reshape(nb, kB, n))
            _guard(xn, t + 1)
            inputs[:, t] = u
            states[:, t + 1] = xn
            x = xn
    return RolloutBatch(states, inputs, int(ks[0]) if nb else 0)


def iter_rollout_blocks(
    model: SystemModel,
    schedule,
    n_rollouts: int,
    seed: int,
    *,
    start: int = 0,
    initial: InitialState | None = None,
    threads: int = 1,
    block: int = 4096,
    time_chunk: int = 4096,
) -> Iterator[RolloutBatch]:
    """Yield rollouts ``start .. start+n_rollouts-1`` in consecutive blocks.

    For a fixed ``block`` size the output depends only on ``(seed, rollout
    index)``, never on the thread count or ``time_chunk``. Changing ``block``
    changes the batching of matrix products and so can move results by a few
    ulps.
    """
    if model.m != schedule.nus.shape[1]:
        raise ValueError("schedule input dimension does not match the model")
    initial = initial or InitialState.standard(model.n)
    edges = list(range(start, start + n_rollouts, block)) + [start + n_rollouts]
    spans = [range(a, b) for a, b in zip(edges[:-1], edges[1:]) if b > a]

    def run(ks):
        return _simulate_block(model, schedule, ks, seed, initial, time_chunk)

    if threads <= 1:
        for ks in spans:
            yield run(ks)
        return
    with ThreadPoolExecutor(max_workers=threads) as pool:
        for w in range(0, len(spans), threads):
            yield from pool.map(run, spans[w : w + threads])


def simulate_batch(model: SystemModel, schedule, n_rollouts: int, seed: int, **kwargs) -> RolloutBatch:
    """Simulate ``n_rollouts`` independent rollouts driven by ``schedule``."""
    return RolloutBatch.concat(list(iter_rollout_blocks(model, schedule, n_rollouts, seed, **kwargs)))


def controllability_rank(A, B) -> int:
    A, B = np.asarray(A), np.asarray(B)
    blocks, P = [], B
    for _ in range(A.shape[0]):
        blocks.append(P)
        P = A @ P
    return int(np.linalg.matrix_rank(np.hstack(blocks)))


@dataclass(frozen=True)
class NetworkSpec:
    """Lossy diffusion on a random weighted graph, discretized by forward Euler.

    ``step=None`` picks ``T = 1 / lambda_max(L + F)`` so the nominal ``A`` has
    spectrum in ``[0, 1)``.

    Noise is specified in continuous time and discretized like the drift
    (Euler-Maruyama), so every variance carries one factor of ``T``: an edge of
    weight ``w`` gets ``f T w^2`` with ``f ~ U(edge_var_range)`` and an input of
    gain ``g`` gets ``f T g^2`` with ``f ~ U(input_var_range)``.
    """

    nodes: int = 8
    edge_prob: float = 0.5
    weight_range: tuple[int, int] = (1, 5)
    loss_diagonal: float | tuple[float, ...] = 0.05
    input_gain: float | tuple[float, ...] = 1.0
    step: float | None = None
    seed: int = 0
    edge_var_range: tuple[float, float] = (0.001, 0.01)
    input_var_range: tuple[float, float] = (0.001, 0.01)
    max_retries: int = 1000

    def __post_init__(self):
        if self.nodes < 2:
            raise ValueError("network needs at least two nodes")
        if not 0 < self.edge_prob <= 1:
            raise ValueError("edge_prob must be in (0, 1]")
        lo, hi = self.weight_range
        if not (int(lo) == lo and int(hi) == hi and 1 <= lo <= hi):
            raise ValueError("weight_range must be positive integers lo <= hi")
        if self.step is not None and self.step <= 0:
            raise ValueError("step must be positive")
        for rng_name in ("edge_var_range", "input_var_range"):
            a, b = getattr(self, rng_name)
            if not 0 <= a <= b:
                raise ValueError(f"{rng_name} must satisfy 0 <= lo <= hi")

    def _diag(self, value) -> np.ndarray:
        return np.broadcast_to(np.asarray(value, dtype=float), (self.nodes,)).copy()


@dataclass(frozen=True, eq=False)
class NetworkSystem:
    model: SystemModel
    noise: EigenNoise
    graph: nx.Graph
    step: float
    edges: tuple[tuple[int, int], ...] = field(default=())


def edge_direction(n: int, j: int, k: int) -> np.ndarray:
    """Noise direction for uncertainty on the weight of edge ``(j, k)``."""
    D = np.zeros((n, n))
    D[j, j] = D[k, k] = 1.0
    D[j, k] = D[k, j] = -1.0
    return D


def input_direction(n: int, k: int) -> np.ndarray:
    D = np.zeros((n, n))
    D[k, k] = 1.0
    return D


def build_network_system(spec: NetworkSpec) -> NetworkSystem:
    n = spec.nodes
    rng = substream(spec.seed, "network")
    for _ in range(spec.max_retries):
        G = nx.erdos_renyi_graph(n, spec.edge_prob, seed=int(rng.integers(2**31)))
        if nx.is_connected(G):
            break
    else:
        raise RuntimeError(f"no connected graph after {spec.max_retries} attempts")
    edges = tuple(sorted(tuple(sorted(e)) for e in G.edges()))
    lo, hi = spec.weight_range
    weights = rng.integers(int(lo), int(hi) + 1, size=len(edges)).astype(float)
    Adj = np.zeros((n, n))
    for (j, k), w in zip(edges, weights):
        Adj[j, k] = Adj[k, j] = w
        G[j][k]["weight"] = w
    L = np.diag(Adj.sum(axis=1)) - Adj
    Fc = np.diag(spec._diag(spec.loss_diagonal))
    gains = spec._diag(spec.input_gain)
    M = L + Fc
    T = spec.step if spec.step is not None else 1.0 / float(np.linalg.eigvalsh(M).max())
    A = np.eye(n) - T * M
    B = T * np.diag(gains)

    edge_frac = rng.uniform(*spec.edge_var_range, size=len(edges))
    input_frac = rng.uniform(*spec.input_var_range, size=n)
    noise = EigenNoise(
        np.stack([edge_direction(n, j, k) for j, k in edges]) if edges else np.zeros((0, n, n)),
        edge_frac * T * weights**2,
        np.stack([input_direction(n, k) for k in range(n)]),
        input_frac * T * gains**2,
    )
    return NetworkSystem(model_from_eigen(A, B, noise), noise, G, T, edges)


def mean_square_radius(model: SystemModel) -> float:
    """Spectral radius of the state second-moment map ``X -> A X A^T + E[Abar X Abar^T]``."""
    n = model.n
    # vec(Abar X Abar^T) = E[Abar (x) Abar] vec(X) = G(SigmaA) vec(X)
    SpA = reshape_G(model.SigmaA, ReshapeSig(n, n, n, n))
    return float(np.abs(np.linalg.eigvals(np.kron(model.A, model.A) + SpA)).max())
