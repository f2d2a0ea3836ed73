"""Exploratory input schedules and identifiability checks.

Each time step gets a fixed input mean ``nu[t] ~ N(0, mean_cov)`` and a fixed
second-moment matrix ``Ubar[t] ~ Wishart(wishart_scale, wishart_dof)``; the
inputs of every rollout are then drawn as ``u[t] ~ N(nu[t], Ubar[t])``.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from ._linalg import RankCertificate, certificate
from .moments import LiftedOps, analytic_moments, propagate_first, reduced_input_moments
from .rng import substream


def min_horizon_first(n: int, m: int) -> int:
    """Horizon guaranteeing a full-row-rank first-moment regressor."""
    if n < 1 or m < 1:
        raise ValueError("dimensions must be >= 1")
    return math.ceil((m * n * n + m * n) / 2 + m + 1)


def min_horizon_second(n: int, m: int) -> int:
    """Horizon guaranteeing a full-row-rank second-moment regressor."""
    if n < 1 or m < 1:
        raise ValueError("dimensions must be >= 1")
    return math.ceil((m * m * n**4 + m * m * n * n) / 2 + m * m + 1)


@dataclass(frozen=True, eq=False)
class InputSchedule:
    nus: np.ndarray  # (l, m)
    Ubars: np.ndarray  # (l, m, m)
    seed: int | None = None

    def __post_init__(self):
        nus = np.array(self.nus, dtype=float)
        if nus.ndim == 1:
            nus = nus[:, None]
        Ubars = np.array(self.Ubars, dtype=float).reshape(len(nus), nus.shape[1], nus.shape[1])
        if len(nus) < 1:
            raise ValueError("schedule horizon must be >= 1")
        if not (np.all(np.isfinite(nus)) and np.all(np.isfinite(Ubars))):
            raise ValueError("schedule entries must be finite")
        if np.abs(Ubars - Ubars.transpose(0, 2, 1)).max() > 1e-12 * max(1.0, np.abs(Ubars).max()):
            raise ValueError("every Ubar must be symmetric")
        w = np.linalg.eigvalsh(Ubars)
        if w.min() < -1e-10 * max(1.0, np.abs(w).max()):
            raise ValueError("every Ubar must be positive semidefinite")
        nus.setflags(write=False)
        Ubars.setflags(write=False)
        object.__setattr__(self, "nus", nus)
        object.__setattr__(self, "Ubars", Ubars)

    @property
    def horizon(self) -> int:
        return len(self.nus)

    @property
    def m(self) -> int:
        return self.nus.shape[1]

    @cached_property
    def input_factors(self) -> np.ndarray:
        """``L[t]`` with ``L[t] @ L[t].T == Ubar[t]``."""
        w, V = np.linalg.eigh(self.Ubars)
        return V * np.sqrt(np.clip(w, 0.0, None))[:, None, :]

    @cached_property
    def U(self) -> np.ndarray:
        """Reduced input second moments ``P2 vec(Ubar[t] + nu[t] nu[t]^T)``."""
        return reduced_input_moments(self.nus, self.Ubars)

    def prefix(self, horizon: int) -> "InputSchedule":
        return InputSchedule(self.nus[:horizon], self.Ubars[:horizon], self.seed)


def wishart(scale: np.ndarray, dof: int, rng: np.random.Generator, size: int) -> np.ndarray:
    """``size`` draws of ``G G^T`` where G has ``dof`` columns ``~ N(0, scale)``."""
    m = scale.shape[0]
    w, V = np.linalg.eigh(scale)
    L = V * np.sqrt(np.clip(w, 0.0, None))
    G = L @ rng.standard_normal((size, m, dof))
    return G @ G.transpose(0, 2, 1)


def design_schedule(
    n: int,
    m: int,
    horizon: int,
    mean_cov=None,
    wishart_scale=None,
    wishart_dof: int | None = None,
    seed: int = 0,
    allow_degenerate: bool = False,
) -> InputSchedule:
    """Draw a fixed exploratory schedule.

    Defaults: ``mean_cov = I``, ``wishart_scale = 0.1 I``, ``wishart_dof = m``.
    Degenerate settings (``dof < m`` or a singular scale) void the rank
    guarantees and raise unless ``allow_degenerate`` is set, in which case a
    warning is issued instead.
    """
    if horizon < 1:
        raise ValueError("horizon must be >= 1")
    mean_cov = np.eye(m) if mean_cov is None else np.asarray(mean_cov, dtype=float).reshape(m, m)
    scale = 0.1 * np.eye(m) if wishart_scale is None else np.asarray(wishart_scale, dtype=float).reshape(m, m)
    dof = m if wishart_dof is None else int(wishart_dof)
    problems = []
    if dof < m:
        problems.append(f"wishart_dof={dof} < m={m}")
    if np.linalg.eigvalsh(scale).min() <= 0:
        problems.append("singular wishart_scale")
    if np.linalg.eigvalsh(mean_cov).min() <= 0:
        problems.append("singular mean_cov")
    if problems:
        msg = "degenerate input design: " + ", ".join(problems)
        if not allow_degenerate:
            raise ValueError(msg)
        warnings.warn(msg, stacklevel=2)
    if dof < 1:
        raise ValueError("wishart_dof must be >= 1")

    rng = substream(seed, "schedule")
    w, V = np.linalg.eigh(mean_cov)
    Lm = V * np.sqrt(np.clip(w, 0.0, None))
    nus = rng.standard_normal((horizon, m)) @ Lm.T
    Ubars = wishart(scale, dof, rng, horizon)
    Ubars = (Ubars + Ubars.transpose(0, 2, 1)) / 2
    return InputSchedule(nus, Ubars, seed)


def sample_input(schedule: InputSchedule, t: int, rng: np.random.Generator) -> np.ndarray:
    if not 0 <= t < schedule.horizon:
        raise IndexError(f"time {t} outside schedule horizon {schedule.horizon}")
    return schedule.nus[t] + schedule.input_factors[t] @ rng.standard_normal(schedule.m)


def first_moment_regressor(mu: np.ndarray, nus: np.ndarray) -> np.ndarray:
    """Columns ``[mu[t]; nu[t]]`` for ``t = l-1 .. 0``."""
    ell = len(nus)
    return np.vstack([mu[:ell][::-1].T, np.asarray(nus)[::-1].T])


def second_moment_regressor(X: np.ndarray, U: np.ndarray) -> np.ndarray:
    """Columns ``[X~[t]; U~[t]]`` for ``t = l-1 .. 0``."""
    ell = len(U)
    return np.vstack([X[:ell][::-1].T, np.asarray(U)[::-1].T])


def rank_certificate_Z(A, B, mu0, schedule: InputSchedule) -> RankCertificate:
    n, m = np.asarray(B).reshape(len(mu0), -1).shape
    if schedule.horizon < min_horizon_first(n, m):
        warnings.warn(f"horizon {schedule.horizon} below the first-moment bound {min_horizon_first(n, m)}", stacklevel=2)
    mu = propagate_first(A, B, mu0, schedule.nus)
    Z = first_moment_regressor(mu, schedule.nus)
    return certificate("Z", np.linalg.svd(Z, compute_uv=False), Z.shape)


def rank_certificate_D(ops: LiftedOps, mu0, Xbar0, schedule: InputSchedule) -> RankCertificate:
    """Row-rank certificate of the exact second-moment regressor.

    ``Xbar0`` is the initial second moment ``E[x0 x0^T]`` (n x n).
    """
    n, m = ops.n, ops.m
    if schedule.horizon < min_horizon_second(n, m):
        warnings.warn(f"horizon {schedule.horizon} below the second-moment bound {min_horizon_second(n, m)}", stacklevel=2)
    traj = analytic_moments(ops, mu0, Xbar0, schedule.nus, schedule.Ubars)
    D = second_moment_regressor(traj.X, traj.U)
    return certificate("D", np.linalg.svd(D, compute_uv=False), D.shape)
