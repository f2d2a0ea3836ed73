"""Multiple-trajectory averaging least squares.

Stage 1 regresses sample state means on ``[mu; nu]`` to get ``(A, B)``.
Stage 2 plugs those into the reduced second-moment recursion and regresses
the residuals on ``[X~; U~]`` to get the identifiable noise parameters
``(S~A, S~B)``. When the noise directions are known, a variant of stage 2
estimates only their variances.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ._linalg import RankCertificate, StackedLeastSquares, regress
from .design import InputSchedule, first_moment_regressor, second_moment_regressor
from .moments import LiftedOps, MomentTrajectory, cross_moments, lift_ops, reduced_noise, reduced_outer
from .reshape import symmetry_maps
from .system import EigenNoise, RolloutBatch, SystemModel


@dataclass(frozen=True, eq=False)
class MomentEstimates:
    mu: np.ndarray  # (l+1, n)
    X: np.ndarray  # (l+1, N)
    W: np.ndarray  # (l, nm)
    Wp: np.ndarray  # (l, nm)
    U: np.ndarray  # (l, M)
    n_r: int | None  # None marks exact (analytic) moments

    @property
    def horizon(self) -> int:
        return len(self.U)

    @property
    def n(self) -> int:
        return self.mu.shape[1]

    @classmethod
    def exact(cls, traj: MomentTrajectory) -> "MomentEstimates":
        return cls(traj.mu, traj.X, traj.W, traj.Wp, traj.U, None)


class MomentAccumulator:
    """Running sums of ``x[t]`` and ``P1 vec(x[t] x[t]^T)`` over rollouts.

    Blocks are folded in the order they are added, so the result depends only
    on the sequence of blocks, not on how they were produced.
    """

    def __init__(self, n: int, horizon: int):
        self.n = n
        self.horizon = horizon
        self.count = 0
        self.sum_x = np.zeros((horizon + 1, n))
        self.sum_xx = np.zeros((horizon + 1, symmetry_maps(n).reduced_dim))

    def add(self, states: np.ndarray) -> None:
        states = np.asarray(states, dtype=float)
        if states.ndim != 3 or states.shape[1:] != (self.horizon + 1, self.n):
            raise ValueError(f"expected states of shape (k, {self.horizon + 1}, {self.n}), got {states.shape}")
        self.sum_x += states.sum(axis=0)
        self.sum_xx += reduced_outer(states).sum(axis=0)
        self.count += states.shape[0]

    def estimates(self, schedule: InputSchedule) -> MomentEstimates:
        if self.count == 0:
            raise ValueError("no rollouts aggregated")
        if schedule.horizon != self.horizon:
            raise ValueError("schedule horizon does not match the rollouts")
        mu = self.sum_x / self.count
        X = self.sum_xx / self.count
        W, Wp = cross_moments(mu, schedule.nus)
        return MomentEstimates(mu, X, W, Wp, schedule.U, self.count)


def aggregate(rollouts: RolloutBatch, schedule: InputSchedule) -> MomentEstimates:
    """Sample moments of a rollout batch; input moments come from the schedule."""
    if rollouts.n_rollouts == 0:
        raise ValueError("empty rollout batch")
    if rollouts.horizon != schedule.horizon:
        raise ValueError(f"rollout horizon {rollouts.horizon} != schedule horizon {schedule.horizon}")
    acc = MomentAccumulator(rollouts.states.shape[2], rollouts.horizon)
    acc.add(rollouts.states)
    return acc.estimates(schedule)


@dataclass(frozen=True, eq=False)
class EstimationResult:
    Ahat: np.ndarray
    Bhat: np.ndarray
    tildeSigmaAhat: np.ndarray
    tildeSigmaBhat: np.ndarray
    certZ: RankCertificate
    certD: RankCertificate
    n_r: int | None = None
    horizon: int | None = None
    errors: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "n_r": self.n_r,
            "horizon": self.horizon,
            "Ahat": self.Ahat.tolist(),
            "Bhat": self.Bhat.tolist(),
            "tildeSigmaAhat": self.tildeSigmaAhat.tolist(),
            "tildeSigmaBhat": self.tildeSigmaBhat.tolist(),
            "certZ": self.certZ.to_dict(),
            "certD": self.certD.to_dict(),
            "errors": self.errors,
        }


def estimate_nominal(est: MomentEstimates, schedule: InputSchedule):
    """Stage 1: ``(Ahat, Bhat, certZ)``."""
    if est.horizon < 2:
        raise ValueError("horizon must be >= 2")
    n = est.n
    Y = est.mu[1:][::-1].T
    Z = first_moment_regressor(est.mu, schedule.nus)
    theta, cert = regress(Y, Z, "Z")
    return theta[:, :n], theta[:, n:], cert


def second_moment_residuals(est: MomentEstimates, ops: LiftedOps) -> np.ndarray:
    """Rows ``C[t] = X[t] - (A~ X[t-1] + K_BA W[t-1] + K_AB W'[t-1] + B~ U[t-1])``, t = 1..l."""
    X = est.X
    pred = X[:-1] @ ops.tildeA.T + est.W @ ops.K_BA.T + est.Wp @ ops.K_AB.T + est.U @ ops.tildeB.T
    return X[1:] - pred


def estimate_covariance(est: MomentEstimates, Ahat, Bhat, schedule: InputSchedule):
    """Stage 2: ``(tildeSigmaAhat, tildeSigmaBhat, certD)``."""
    ops = lift_ops(Ahat, Bhat)
    N = ops.tildeA.shape[0]
    C = second_moment_residuals(est, ops)[::-1].T
    D = second_moment_regressor(est.X, est.U)
    theta, cert = regress(C, D, "D")
    return theta[:, :N], theta[:, N:], cert


def mals(est: MomentEstimates, schedule: InputSchedule) -> EstimationResult:
    Ahat, Bhat, certZ = estimate_nominal(est, schedule)
    tSA, tSB, certD = estimate_covariance(est, Ahat, Bhat, schedule)
    return EstimationResult(Ahat, Bhat, tSA, tSB, certZ, certD, est.n_r, est.horizon)


@dataclass(frozen=True, eq=False)
class VarianceResult:
    sigma2hat: np.ndarray
    delta2hat: np.ndarray
    cert: RankCertificate

    @property
    def negative(self) -> bool:
        return bool((self.sigma2hat < 0).any() or (self.delta2hat < 0).any())

    def clipped(self) -> "VarianceResult":
        return VarianceResult(np.clip(self.sigma2hat, 0, None), np.clip(self.delta2hat, 0, None), self.cert)


def lifted_directions(eigen: EigenNoise) -> tuple[np.ndarray, np.ndarray]:
    """``P1 (A_i (x) A_i) Q1`` and ``P1 (B_j (x) B_j) Q2`` for every direction."""
    n, m = eigen.directionsA.shape[1], eigen.directionsB.shape[2]
    s1, s2 = symmetry_maps(n), symmetry_maps(m)
    tA = np.stack([s1.P @ np.kron(D, D) @ s1.Q for D in eigen.directionsA]) if eigen.r else np.zeros((0, s1.reduced_dim, s1.reduced_dim))
    tB = np.stack([s1.P @ np.kron(D, D) @ s2.Q for D in eigen.directionsB]) if eigen.s else np.zeros((0, s1.reduced_dim, s2.reduced_dim))
    return tA, tB


def estimate_variances_known_directions(
    est: MomentEstimates, Ahat, Bhat, eigen: EigenNoise, schedule: InputSchedule, chunk: int = 4096
) -> VarianceResult:
    """Least-squares noise variances when the noise directions are known."""
    ops = lift_ops(Ahat, Bhat)
    C = second_moment_residuals(est, ops)
    tA, tB = lifted_directions(eigen)
    r, s = len(tA), len(tB)
    ls = StackedLeastSquares(r + s)
    X, U = est.X[:-1], est.U
    for a in range(0, est.horizon, chunk):
        b = min(a + chunk, est.horizon)
        feats = np.concatenate([
            np.einsum("iab,tb->tai", tA, X[a:b]),
            np.einsum("jab,tb->taj", tB, U[a:b]),
        ], axis=2)
        ls.add(feats.reshape(-1, r + s), C[a:b].reshape(-1))
    theta, cert = ls.solve("D")
    return VarianceResult(theta[:r], theta[r:], cert)


def _rel(err: float, ref: float):
    return err / ref if ref > 0 else None


def estimation_errors(result: EstimationResult, truth: SystemModel) -> dict:
    tSA, tSB = reduced_noise(truth)
    AB = np.hstack([truth.A, truth.B])
    ABhat = np.hstack([result.Ahat, result.Bhat])
    out = {
        "rel_err_AB": _rel(np.linalg.norm(ABhat - AB), np.linalg.norm(AB)),
        "rel_err_SigmaA": _rel(np.linalg.norm(result.tildeSigmaAhat - tSA), np.linalg.norm(tSA)),
        "rel_err_SigmaB": _rel(np.linalg.norm(result.tildeSigmaBhat - tSB), np.linalg.norm(tSB)),
        "abs_err_SigmaA": float(np.linalg.norm(result.tildeSigmaAhat - tSA)),
        "abs_err_SigmaB": float(np.linalg.norm(result.tildeSigmaBhat - tSB)),
    }
    return {k: (float(v) if v is not None else None) for k, v in out.items()}


def _normalized(truth: np.ndarray, est: np.ndarray):
    truth, est = np.asarray(truth, float), np.asarray(est, float)
    ok = truth > 0
    errs = np.full(truth.shape, np.nan)
    errs[ok] = np.abs(truth[ok] - est[ok]) / truth[ok]
    return errs, int((~ok).sum())


def variance_errors(vr: VarianceResult, truth: EigenNoise) -> dict:
    """Normalized errors ``|v - vhat| / v`` with their means and maxima.

    Directions with zero true variance are left out of the statistics and
    counted in ``zero_variance_sigma`` / ``zero_variance_delta``.
    """
    es, zs = _normalized(truth.variancesA, vr.sigma2hat)
    ed, zd = _normalized(truth.variancesB, vr.delta2hat)

    def stat(fn, e):
        e = e[~np.isnan(e)]
        return float(fn(e)) if e.size else None

    return {
        "sigma_errors": [None if np.isnan(v) else float(v) for v in es],
        "delta_errors": [None if np.isnan(v) else float(v) for v in ed],
        "mean_sigma": stat(np.mean, es),
        "max_sigma": stat(np.max, es),
        "mean_delta": stat(np.mean, ed),
        "max_delta": stat(np.max, ed),
        "zero_variance_sigma": zs,
        "zero_variance_delta": zd,
        "negative_estimates": vr.negative,
    }


def error_metrics(result, truth) -> dict:
    if isinstance(result, VarianceResult):
        return variance_errors(result, truth)
    return estimation_errors(result, truth)
