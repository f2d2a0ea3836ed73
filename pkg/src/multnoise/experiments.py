"""Experiment drivers: the consistency curve and the network variance study.

All outputs are pure functions of the configuration; wall-clock timings are
never written to result files, so reruns produce identical bytes.
"""
from __future__ import annotations

import csv
import dataclasses
import io as _io
import math
from dataclasses import dataclass, field

import numpy as np

from .design import design_schedule, min_horizon_second
from .estimator import (
    EstimationResult,
    MomentAccumulator,
    estimate_nominal,
    estimate_variances_known_directions,
    estimation_errors,
    mals,
    variance_errors,
)
from .io import (
    ConfigError,
    dataclass_from_dict,
    dumps,
    load_system,
    network_spec_to_dict,
    read_json,
    system_from_dict,
    system_to_dict,
)
from .moments import reduced_outer
from .system import (
    NetworkSpec,
    SystemModel,
    build_network_system,
    controllability_rank,
    iter_rollout_blocks,
    mean_square_radius,
    simple_example_system,
)

EXPERIMENTS = ("simple", "network", "custom")
FORMATS = ("csv", "json")


class NumericalFailure(RuntimeError):
    """Simulation or estimation produced values that cannot be reported."""


@dataclass(frozen=True)
class ExperimentConfig:
    experiment: str = "simple"
    seeds: tuple[int, ...] = (0,)
    horizon: int | None = None  # None: the second-moment horizon bound
    rollouts: int | None = None  # largest n_r; 100000 for curves, 7 for the network study
    grid: tuple[int, ...] | None = None  # explicit n_r grid, overrides grid_points
    grid_points: int = 100
    grid_min: int = 10
    network: NetworkSpec = field(default_factory=NetworkSpec)
    system: dict | None = None  # inline system document for "custom"
    system_file: str | None = None
    out: str | None = None
    format: str = "csv"
    threads: int = 1
    clip_negative: bool = False

    def __post_init__(self):
        if self.experiment not in EXPERIMENTS:
            raise ConfigError(f"experiment must be one of {', '.join(EXPERIMENTS)}, got {self.experiment!r}")
        if self.format not in FORMATS:
            raise ConfigError(f"format must be csv or json, got {self.format!r}")
        if not self.seeds:
            raise ConfigError("seeds must not be empty")
        if any(int(s) != s or s < 0 for s in self.seeds):
            raise ConfigError("seeds must be nonnegative integers")
        if self.horizon is not None and self.horizon < 2:
            raise ConfigError("horizon must be >= 2")
        if self.rollouts is not None and self.rollouts < 1:
            raise ConfigError("rollouts must be >= 1")
        if self.threads < 1:
            raise ConfigError("threads must be >= 1")
        if self.grid is not None:
            g = list(self.grid)
            if not g or any(int(v) != v or v < 1 for v in g):
                raise ConfigError("grid entries must be positive integers")
            if any(b <= a for a, b in zip(g, g[1:])):
                raise ConfigError("grid must be strictly increasing")
        if self.grid_points < 1 or self.grid_min < 1:
            raise ConfigError("grid_points and grid_min must be >= 1")
        if self.experiment == "custom" and self.system is None and self.system_file is None:
            raise ConfigError("custom experiment needs 'system' or 'system_file'")

    def max_rollouts(self) -> int:
        if self.grid is not None:
            return int(self.grid[-1])
        if self.rollouts is not None:
            return int(self.rollouts)
        return 7 if self.experiment == "network" else 100_000

    def n_r_grid(self) -> list[int]:
        """Strictly increasing rollout counts ending at :meth:`max_rollouts`."""
        if self.grid is not None:
            return [int(v) for v in self.grid]
        top = self.max_rollouts()
        lo = min(self.grid_min, top)
        pts = np.unique(np.round(np.logspace(math.log10(lo), math.log10(top), self.grid_points)).astype(int))
        return [int(v) for v in pts]

    def to_dict(self) -> dict:
        doc = dataclasses.asdict(self)
        doc["network"] = network_spec_to_dict(self.network)
        for k in ("seeds", "grid"):
            if doc[k] is not None:
                doc[k] = list(doc[k])
        return doc


def config_from_dict(doc: dict) -> ExperimentConfig:
    doc = dict(doc)
    if "network" in doc:
        doc["network"] = dataclass_from_dict(NetworkSpec, doc["network"], "network")
    for k in ("seeds", "grid"):
        if isinstance(doc.get(k), list):
            doc[k] = tuple(doc[k])
    return dataclass_from_dict(ExperimentConfig, doc, "config")


def load_config(path) -> ExperimentConfig:
    return config_from_dict(read_json(path))


# ---------------------------------------------------------------- curves

CURVE_COLUMNS = ("seed", "n_r", "rel_err_AB", "rel_err_SigmaA", "rel_err_SigmaB", "full_rank_Z", "full_rank_D", "flag")


@dataclass
class ErrorCurve:
    rows: list[dict] = field(default_factory=list)
    results: dict = field(default_factory=dict)  # seed -> EstimationResult at the largest n_r

    def column(self, name: str, seed: int | None = None) -> np.ndarray:
        rows = [r for r in self.rows if seed is None or r["seed"] == seed]
        return np.array([np.nan if r[name] is None else r[name] for r in rows], dtype=float)


def _finite_or_none(v):
    return float(v) if v is not None and math.isfinite(v) else None


def _curve_row(seed: int, n_r: int, res: EstimationResult, errs: dict) -> dict:
    row = {
        "seed": seed,
        "n_r": n_r,
        "rel_err_AB": _finite_or_none(errs["rel_err_AB"]),
        "rel_err_SigmaA": _finite_or_none(errs["rel_err_SigmaA"]),
        "rel_err_SigmaB": _finite_or_none(errs["rel_err_SigmaB"]),
        "full_rank_Z": res.certZ.full_rank,
        "full_rank_D": res.certD.full_rank,
    }
    flags = [f"undefined_{k}" for k in ("rel_err_AB", "rel_err_SigmaA", "rel_err_SigmaB") if row[k] is None]
    if not res.certZ.full_rank:
        flags.append("rank_deficient_Z")
    if not res.certD.full_rank:
        flags.append("rank_deficient_D")
    row["flag"] = ";".join(flags)
    return row


def prefix_estimates(model: SystemModel, schedule, grid: list[int], seed: int, threads: int = 1):
    """Yield ``(n_r, MomentEstimates)`` using the first ``n_r`` rollouts of one batch."""
    n, ell = model.n, schedule.horizon
    acc = MomentAccumulator(n, ell)
    pending = list(grid)
    for blk in iter_rollout_blocks(model, schedule, grid[-1], seed, threads=threads):
        lo, hi = blk.start, blk.start + blk.n_rollouts
        while pending and pending[0] <= hi:
            k = pending.pop(0) - lo
            part = MomentAccumulator(n, ell)
            part.sum_x = acc.sum_x + blk.states[:k].sum(axis=0)
            part.sum_xx = acc.sum_xx + reduced_outer(blk.states[:k]).sum(axis=0)
            part.count = acc.count + k
            yield part.count, part.estimates(schedule)
        acc.add(blk.states)


def _check_finite(res: EstimationResult, where: str) -> None:
    for name in ("Ahat", "Bhat", "tildeSigmaAhat", "tildeSigmaBhat"):
        if not np.all(np.isfinite(getattr(res, name))):
            raise NumericalFailure(f"{where}: non-finite {name}")


def consistency_curve(model: SystemModel, config: ExperimentConfig) -> ErrorCurve:
    ell = config.horizon or min_horizon_second(model.n, model.m)
    grid = config.n_r_grid()
    curve = ErrorCurve()
    for seed in config.seeds:
        schedule = design_schedule(model.n, model.m, ell, seed=seed)
        for n_r, est in prefix_estimates(model, schedule, grid, seed, config.threads):
            res = mals(est, schedule)
            _check_finite(res, f"seed {seed}, n_r {n_r}")
            errs = estimation_errors(res, model)
            curve.rows.append(_curve_row(seed, n_r, res, errs))
            if n_r == grid[-1]:
                curve.results[seed] = dataclasses.replace(res, errors=errs)
    return curve


def run_simple(config: ExperimentConfig) -> ErrorCurve:
    return consistency_curve(simple_example_system(), config)


def custom_system(config: ExperimentConfig) -> SystemModel:
    if config.system is not None:
        return system_from_dict(config.system)
    return load_system(config.system_file)


def run_custom(config: ExperimentConfig) -> ErrorCurve:
    return consistency_curve(custom_system(config), config)


# ---------------------------------------------------------------- network

NETWORK_COLUMNS = (
    "seed", "edges", "step", "ms_radius", "controllable", "mean_sigma", "max_sigma", "mean_delta", "max_delta",
    "negative_estimates", "full_rank_D", "flag",
)


def network_trial(spec: NetworkSpec, horizon: int | None, rollouts: int, threads: int = 1, clip: bool = False) -> dict:
    """One network variance study; the schedule and rollouts share the spec seed."""
    net = build_network_system(spec)
    model, noise, seed = net.model, net.noise, spec.seed
    ell = horizon or min_horizon_second(model.n, model.m)
    schedule = design_schedule(model.n, model.m, ell, seed=seed)
    acc = MomentAccumulator(model.n, ell)
    for blk in iter_rollout_blocks(model, schedule, rollouts, seed, threads=threads):
        acc.add(blk.states)
    est = acc.estimates(schedule)
    Ahat, Bhat, certZ = estimate_nominal(est, schedule)
    vr = estimate_variances_known_directions(est, Ahat, Bhat, noise, schedule)
    if not (np.all(np.isfinite(vr.sigma2hat)) and np.all(np.isfinite(vr.delta2hat))):
        raise NumericalFailure(f"seed {seed}: non-finite variance estimates")
    negative = vr.negative
    if clip:
        vr = vr.clipped()
    errs = variance_errors(vr, noise)
    ctrl = controllability_rank(model.A, model.B) == model.n
    row = {
        "seed": seed,
        "edges": len(net.edges),
        "step": net.step,
        "ms_radius": mean_square_radius(model),
        "controllable": ctrl,
        "mean_sigma": errs["mean_sigma"],
        "max_sigma": errs["max_sigma"],
        "mean_delta": errs["mean_delta"],
        "max_delta": errs["max_delta"],
        "negative_estimates": negative,
        "full_rank_D": vr.cert.full_rank,
    }
    flags = [f"undefined_{k}" for k in ("mean_sigma", "max_sigma", "mean_delta", "max_delta") if row[k] is None]
    if errs["zero_variance_sigma"] or errs["zero_variance_delta"]:
        flags.append(f"zero_variance_truth({errs['zero_variance_sigma']},{errs['zero_variance_delta']})")
    if negative:
        flags.append("negative_clipped" if clip else "negative_estimates")
    if not ctrl:
        flags.append("uncontrollable")
    if row["ms_radius"] >= 1:
        flags.append("mean_square_unstable")
    if not vr.cert.full_rank:
        flags.append("rank_deficient_D")
    row["flag"] = ";".join(flags)
    detail = {
        "edges": [list(e) for e in net.edges],
        "sigma2": noise.variancesA.tolist(),
        "sigma2hat": vr.sigma2hat.tolist(),
        "delta2": noise.variancesB.tolist(),
        "delta2hat": vr.delta2hat.tolist(),
        "sigma_errors": errs["sigma_errors"],
        "delta_errors": errs["delta_errors"],
        "certZ": certZ.to_dict(),
        "certD": vr.cert.to_dict(),
        "horizon": ell,
        "rollouts": rollouts,
    }
    return {"row": row, "detail": detail}


def run_network(config: ExperimentConfig) -> dict:
    """Table-style statistics for every seed, plus their means over seeds."""
    trials = [
        network_trial(dataclasses.replace(config.network, seed=int(s)), config.horizon, config.max_rollouts(),
                      config.threads, config.clip_negative)
        for s in config.seeds
    ]
    rows = [t["row"] for t in trials]
    summary = {}
    for k in ("mean_sigma", "max_sigma", "mean_delta", "max_delta"):
        vals = [r[k] for r in rows if r[k] is not None]
        summary[k] = float(np.mean(vals)) if vals else None
    return {"rows": rows, "details": [t["detail"] for t in trials], "summary": summary}


# ---------------------------------------------------------------- output

def _cell(v) -> str:
    if v is None:
        return ""
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    return str(v)


def to_csv(rows: list[dict], columns) -> str:
    buf = _io.StringIO()
    w = csv.writer(buf, lineterminator="\r\n")
    w.writerow(columns)
    for r in rows:
        w.writerow([_cell(r[c]) for c in columns])
    return buf.getvalue()


def _echo(config: ExperimentConfig) -> dict:
    # where and how fast the run went does not belong in the output bytes
    doc = config.to_dict()
    del doc["out"], doc["threads"]
    return doc


def render(config: ExperimentConfig, outcome) -> str:
    if config.experiment == "network":
        if config.format == "csv":
            return to_csv(outcome["rows"], NETWORK_COLUMNS)
        return dumps({"config": _echo(config), **outcome})
    if config.format == "csv":
        return to_csv(outcome.rows, CURVE_COLUMNS)
    doc = {
        "config": _echo(config),
        "rows": outcome.rows,
        "final": {str(s): r.to_dict() for s, r in sorted(outcome.results.items())},
    }
    if config.experiment == "custom":
        doc["system"] = system_to_dict(custom_system(config))
    return dumps(doc)


def run(config: ExperimentConfig):
    return {"simple": run_simple, "network": run_network, "custom": run_custom}[config.experiment](config)
