"""Experiment configuration: YAML schema, overrides and validation.

Example::

    schema_version: 1
    seed: 7
    output: runs/bosons
    ensemble:
      kind: biorthogonal
      theta: 2
      weight: {family: power_exp, alpha: 0, tau: 1}
    sampler: {n: 64, sweeps: 1500, burn_in: 500, thinning: 10, chains: 4}
    equilibrium: {grid: 400, truncate: [0, 6], tolerance: 1.0e-8}
    verify: {source: sample, against: rho-infinity, metric: w1, threshold: 0.05}
"""
from __future__ import annotations

import copy
import hashlib
import json
import math
from dataclasses import dataclass
from typing import Any, Optional

import yaml

from .ensemble_model import (AngelescoSpec, EnsembleSpec, GaussPower, PowerExp,
                             ensemble_from_dict)
from .errors import ConfigError
from .matrix_model import DEFAULT_CALIBRATION_SCALE
from .sampler import ChainConfig

SCHEMA_VERSION = 1

DEFAULTS = {
    "schema_version": SCHEMA_VERSION,
    "seed": 0,
    "output": "run",
    "sampler": {"n": 16, "sweeps": 2000, "burn_in": None, "thinning": 10, "step_size": 0.1,
                "adapt": True, "chains": 1},
    "equilibrium": {"grid": 400, "truncate": None, "tolerance": 1e-8},
    "verify": {"source": "sample", "against": None, "metric": "w1", "threshold": None},
    "boson_matrix": {"n": 32, "alpha": 0, "draws": 200, "calibration_scale": DEFAULT_CALIBRATION_SCALE},
    "ldp": {"event": "x,1.0", "n": [1, 2, 3], "grid": 200, "resolution": None},
    "oracle": {"n": 2, "resolution": None, "events": []},
}

SECTIONS = set(DEFAULTS) | {"ensemble"}
VERIFY_SOURCES = ("sample", "equilibrium", "boson-matrix", "reference")
VERIFY_TARGETS = ("rho-infinity", "semicircle", "oracle")
METRICS = ("w1", "bl", "ks")


def _merge(base: dict, over: dict, path: str = "") -> dict:
    out = copy.deepcopy(base)
    for key, val in over.items():
        where = f"{path}{key}"
        if key not in base and path:
            raise ConfigError(f"{where}: unknown field")
        if isinstance(base.get(key), dict) and val is not None:
            if not isinstance(val, dict):
                raise ConfigError(f"{where}: expected a mapping")
            out[key] = _merge(base[key], val, where + ".")
        else:
            out[key] = val
    return out


def apply_override(raw: dict, assignment: str) -> dict:
    """Apply one ``dotted.key=value`` override; the value is parsed as YAML."""
    if "=" not in assignment:
        raise ConfigError(f"--set expects key=value, got {assignment!r}")
    key, text = assignment.split("=", 1)
    parts = [p for p in key.strip().split(".") if p]
    if not parts:
        raise ConfigError(f"--set: empty key in {assignment!r}")
    value = yaml.safe_load(text)
    raw = copy.deepcopy(raw)
    node = raw
    for p in parts[:-1]:
        node = node.setdefault(p, {})
        if not isinstance(node, dict):
            raise ConfigError(f"--set {key}: {p} is not a section")
    node[parts[-1]] = value
    return raw


def _is_rho_infinity_compatible(spec) -> bool:
    return (isinstance(spec, EnsembleSpec) and spec.theta == 2 and isinstance(spec.weight, PowerExp)
            and spec.weight.alpha == 0 and spec.weight.tau == 1 and spec.kappa == 1)


def _is_semicircle_compatible(spec) -> bool:
    return (isinstance(spec, EnsembleSpec) and spec.theta == 1 and isinstance(spec.weight, GaussPower)
            and spec.weight.alpha == 0 and spec.weight.scale == 0.5 and spec.kappa == 1)


def reference_compatible(name: str, spec) -> bool:
    if name == "rho-infinity":
        return _is_rho_infinity_compatible(spec)
    if name == "semicircle":
        return _is_semicircle_compatible(spec)
    return False


def _parse_pair(value, field_name):
    if value is None:
        return None
    if isinstance(value, str):
        value = [v for v in value.split(",") if v.strip()]
    try:
        a, b = (float(v) for v in value)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{field_name}: expected two numbers a,b") from exc
    if not (math.isfinite(a) and math.isfinite(b)) or not a < b:
        raise ConfigError(f"{field_name}: need finite a < b, got ({a}, {b})")
    return (a, b)


@dataclass
class ExperimentConfig:
    raw: dict
    ensemble: Any
    seed: int
    output: str

    @property
    def sampler(self) -> dict:
        return self.raw["sampler"]

    @property
    def equilibrium(self) -> dict:
        return self.raw["equilibrium"]

    @property
    def verify(self) -> dict:
        return self.raw["verify"]

    @property
    def boson_matrix(self) -> dict:
        return self.raw["boson_matrix"]

    @property
    def ldp(self) -> dict:
        return self.raw["ldp"]

    @property
    def oracle(self) -> dict:
        return self.raw["oracle"]

    def chain_config(self) -> ChainConfig:
        s = self.sampler
        try:
            return ChainConfig(n=int(s["n"]), sweeps=int(s["sweeps"]),
                               burn_in=None if s["burn_in"] is None else int(s["burn_in"]),
                               thinning=int(s["thinning"]), step_size=float(s["step_size"]),
                               adapt=bool(s["adapt"]), seed=int(self.seed))
        except ConfigError as exc:
            raise ConfigError(f"sampler: {exc}") from exc

    def truncate(self):
        return _parse_pair(self.equilibrium["truncate"], "equilibrium.truncate")

    def canonical_json(self) -> str:
        """Sorted compact JSON of every field except the output location."""
        body = {k: v for k, v in self.raw.items() if k != "output"}
        return json.dumps(body, sort_keys=True, separators=(",", ":"), default=str)

    def digest(self) -> str:
        return hashlib.sha256(self.canonical_json().encode()).hexdigest()


def build_config(raw: dict) -> ExperimentConfig:
    """Validate a raw mapping (already merged with overrides)."""
    if not isinstance(raw, dict):
        raise ConfigError("config root must be a mapping")
    unknown = set(raw) - SECTIONS
    if unknown:
        raise ConfigError(f"unknown top-level fields {sorted(unknown)}")
    if "ensemble" not in raw or not isinstance(raw["ensemble"], dict):
        raise ConfigError("ensemble: exactly one ensemble section is required")
    merged = _merge(DEFAULTS, {k: v for k, v in raw.items() if k != "ensemble"})
    merged["ensemble"] = copy.deepcopy(raw["ensemble"])
    if merged["schema_version"] != SCHEMA_VERSION:
        raise ConfigError(f"schema_version: expected {SCHEMA_VERSION}, got {merged['schema_version']!r}")
    try:
        spec = ensemble_from_dict(merged["ensemble"])
    except ConfigError as exc:
        raise ConfigError(f"ensemble: {exc}") from exc
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"ensemble: {exc}") from exc
    if not isinstance(merged["seed"], int) or merged["seed"] < 0:
        raise ConfigError("seed: expected a nonnegative integer")
    cfg = ExperimentConfig(merged, spec, merged["seed"], str(merged["output"]))
    cfg.chain_config()
    cfg.truncate()
    sampler_chains = merged["sampler"]["chains"]
    if not isinstance(sampler_chains, int) or sampler_chains < 1:
        raise ConfigError("sampler.chains: expected a positive integer")
    eq = merged["equilibrium"]
    if not isinstance(eq["grid"], (int, list)):
        raise ConfigError("equilibrium.grid: expected an integer (or one per species)")
    if not float(eq["tolerance"]) > 0:
        raise ConfigError("equilibrium.tolerance: must be > 0")
    v = merged["verify"]
    if v["source"] not in VERIFY_SOURCES:
        raise ConfigError(f"verify.source: expected one of {VERIFY_SOURCES}, got {v['source']!r}")
    if v["against"] is not None and v["against"] not in VERIFY_TARGETS:
        raise ConfigError(f"verify.against: expected one of {VERIFY_TARGETS}, got {v['against']!r}")
    if v["metric"] not in METRICS:
        raise ConfigError(f"verify.metric: expected one of {METRICS}, got {v['metric']!r}")
    if v["against"] not in (None, "oracle") and not reference_compatible(v["against"], spec):
        raise ConfigError(f"verify.against: reference law {v['against']!r} does not describe this ensemble")
    if v["source"] == "reference" and v["against"] == "oracle":
        raise ConfigError("verify.source: 'reference' cannot be checked against the oracle")
    if v["source"] == "boson-matrix" and not _is_rho_infinity_compatible(spec):
        raise ConfigError("verify.source: boson-matrix requires the bosonic ensemble")
    bm = merged["boson_matrix"]
    if int(bm["n"]) < 1 or int(bm["draws"]) < 1 or int(bm["alpha"]) < 0 or not float(bm["calibration_scale"]) > 0:
        raise ConfigError("boson_matrix: need n >= 1, draws >= 1, alpha >= 0, calibration_scale > 0")
    return cfg


def load_config(path: Optional[str], overrides=()) -> ExperimentConfig:
    raw: dict = {}
    if path is not None:
        try:
            with open(path) as fh:
                raw = yaml.safe_load(fh) or {}
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        except yaml.YAMLError as exc:
            raise ConfigError(f"config {path} is not valid YAML: {exc}") from exc
    for item in overrides:
        raw = apply_override(raw, item)
    return build_config(raw)

