"""JSON documents for systems, network specs and estimation results.

Matrices are stored row-major, either as nested lists or as a flat list next
to the declared dimensions ``n`` and ``m``.
"""
from __future__ import annotations

import dataclasses
import json
from pathlib import Path

import numpy as np

from .system import NetworkSpec, SystemModel


class ConfigError(ValueError):
    """A configuration or system document is missing fields or violates an invariant."""


def _require(doc: dict, key: str, where: str):
    if not isinstance(doc, dict):
        raise ConfigError(f"{where}: expected an object")
    if key not in doc:
        raise ConfigError(f"{where}: missing field '{key}'")
    return doc[key]


def _matrix(value, rows: int, cols: int, name: str) -> np.ndarray:
    try:
        arr = np.asarray(value, dtype=float)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"field '{name}' is not numeric: {exc}") from None
    if arr.ndim == 1 and arr.size == rows * cols:
        arr = arr.reshape(rows, cols)
    if arr.shape != (rows, cols):
        raise ConfigError(f"field '{name}' must be {rows}x{cols}, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ConfigError(f"field '{name}' has non-finite entries")
    return arr


def system_from_dict(doc: dict, where: str = "system") -> SystemModel:
    n = int(_require(doc, "n", where))
    m = int(_require(doc, "m", where))
    if n < 1 or m < 1:
        raise ConfigError(f"{where}: dimensions n and m must be >= 1")
    A = _matrix(_require(doc, "A", where), n, n, "A")
    B = _matrix(_require(doc, "B", where), n, m, "B")
    SA = _matrix(_require(doc, "SigmaA", where), n * n, n * n, "SigmaA")
    SB = _matrix(_require(doc, "SigmaB", where), n * m, n * m, "SigmaB")
    try:
        return SystemModel(A, B, SA, SB)
    except ValueError as exc:
        raise ConfigError(f"{where}: {exc}") from None


def system_to_dict(model: SystemModel) -> dict:
    return {
        "n": model.n,
        "m": model.m,
        "A": model.A.tolist(),
        "B": model.B.tolist(),
        "SigmaA": model.SigmaA.tolist(),
        "SigmaB": model.SigmaB.tolist(),
    }


def _tuple_fields(cls) -> set[str]:
    return {f.name for f in dataclasses.fields(cls) if "tuple" in str(f.type)}


def dataclass_from_dict(cls, doc: dict, where: str):
    """Build ``cls`` from a dict, rejecting unknown keys and naming missing ones."""
    if not isinstance(doc, dict):
        raise ConfigError(f"{where}: expected an object")
    fields = {f.name: f for f in dataclasses.fields(cls)}
    unknown = sorted(set(doc) - set(fields))
    if unknown:
        raise ConfigError(f"{where}: unknown field(s) {', '.join(unknown)}")
    missing = [
        name for name, f in fields.items()
        if name not in doc and f.default is dataclasses.MISSING and f.default_factory is dataclasses.MISSING
    ]
    if missing:
        raise ConfigError(f"{where}: missing field '{missing[0]}'")
    tuples = _tuple_fields(cls)
    kwargs = {k: (tuple(v) if k in tuples and isinstance(v, list) else v) for k, v in doc.items()}
    try:
        return cls(**kwargs)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{where}: {exc}") from None


def network_spec_from_dict(doc: dict) -> NetworkSpec:
    return dataclass_from_dict(NetworkSpec, doc, "network")


def network_spec_to_dict(spec: NetworkSpec) -> dict:
    return {k: (list(v) if isinstance(v, tuple) else v) for k, v in dataclasses.asdict(spec).items()}


def read_json(path) -> dict:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from None
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from None


def load_system(path) -> SystemModel:
    doc = read_json(path)
    return system_from_dict(doc.get("system", doc) if isinstance(doc, dict) else doc, str(path))


def save_system(model: SystemModel, path) -> None:
    Path(path).write_text(dumps(system_to_dict(model)))


def dumps(doc) -> str:
    """Canonical JSON text: sorted keys, shortest round-trip floats, trailing newline."""
    return json.dumps(doc, sort_keys=True, indent=2, allow_nan=False) + "\n"
