"""Campaign configuration: a single JSON document, validated and resolved with defaults."""

from __future__ import annotations

import copy
import json
import os
from dataclasses import dataclass, fields
from pathlib import Path

import numpy as np

from .bayes import DrawSet, InvalidParameterError, Prior, load_prior, make_draws
from .design import DesignSpec, InvalidDesignError
from .optimizers.cooling import CoolingConfig

DRAW_METHODS = ("spherical_radial", "monte_carlo", "point")
QUADRATURE_DEFAULTS = {
    "spherical_radial": {"n_radial": 3, "n_rotations": 10},
    "monte_carlo": {"n": 1000},
    "point": {},
}


class ConfigError(ValueError):
    """Invalid configuration; ``field`` is the dotted path of the offending entry."""

    def __init__(self, field: str, message: str):
        self.field = field
        super().__init__(f"config field '{field}': {message}")


def load_config(path) -> dict:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError("<file>", f"cannot read {path}: {exc.strerror}") from None
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError("<file>", f"not valid JSON ({exc})") from None
    if not isinstance(doc, dict):
        raise ConfigError("<root>", "must be a JSON object")
    return doc


def section(doc: dict, name: str, required: bool = True) -> dict:
    if name not in doc:
        if required:
            raise ConfigError(name, "missing")
        return {}
    sec = doc[name]
    if not isinstance(sec, dict):
        raise ConfigError(name, "must be an object")
    return sec


def check_keys(sec: dict, allowed, where: str) -> None:
    for key in sec:
        if key not in allowed:
            raise ConfigError(f"{where}.{key}", f"unknown key (allowed: {', '.join(sorted(allowed))})")


def as_int(value, field: str, minimum: int | None = None) -> int:
    if isinstance(value, bool) or not isinstance(value, (int, np.integer)):
        raise ConfigError(field, f"must be an integer, got {value!r}")
    if minimum is not None and value < minimum:
        raise ConfigError(field, f"must be >= {minimum}, got {value}")
    return int(value)


def as_number(value, field: str, positive: bool = False) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(field, f"must be a number, got {value!r}")
    if positive and not value > 0:
        raise ConfigError(field, f"must be > 0, got {value}")
    return float(value)


def resolve_problem(doc: dict) -> tuple[dict, DesignSpec]:
    sec = section(doc, "problem")
    check_keys(sec, {"levels", "n_sets", "n_alts"}, "problem")
    for key in ("levels", "n_sets", "n_alts"):
        if key not in sec:
            raise ConfigError(f"problem.{key}", "missing")
    levels = sec["levels"]
    if not isinstance(levels, list) or not levels:
        raise ConfigError("problem.levels", "must be a non-empty list of level counts")
    levels = [as_int(v, f"problem.levels[{i}]", 2) for i, v in enumerate(levels)]
    n_sets = as_int(sec["n_sets"], "problem.n_sets", 1)
    n_alts = as_int(sec["n_alts"], "problem.n_alts", 2)
    try:
        spec = DesignSpec(tuple(levels), n_sets, n_alts)
    except (InvalidDesignError, ValueError) as exc:
        raise ConfigError("problem", str(exc)) from None
    return {"levels": levels, "n_sets": n_sets, "n_alts": n_alts}, spec


def resolve_prior(sec, spec: DesignSpec, where: str = "prior") -> tuple[dict, Prior]:
    if not isinstance(sec, dict):
        raise ConfigError(where, "must be an object")
    check_keys(sec, {"mean", "covariance", "family"}, where)
    if "family" in sec:
        fam = sec["family"]
        if not isinstance(fam, dict):
            raise ConfigError(f"{where}.family", "must be an object with lambda and kappa")
        check_keys(fam, {"lambda", "kappa"}, f"{where}.family")
        for key in ("lambda", "kappa"):
            if key not in fam:
                raise ConfigError(f"{where}.family.{key}", "missing")
            as_number(fam[key], f"{where}.family.{key}", positive=True)
    try:
        prior = load_prior(sec, spec)
    except (InvalidParameterError, ValueError) as exc:
        raise ConfigError(where, str(exc)) from None
    try:
        prior.cholesky()
    except np.linalg.LinAlgError as exc:
        raise ConfigError(f"{where}.covariance", str(exc)) from None
    resolved = copy.deepcopy(sec)
    resolved["mean"] = prior.mean.tolist()
    resolved["covariance"] = prior.covariance.tolist()
    return resolved, prior


def resolve_quadrature(doc: dict) -> dict:
    sec = section(doc, "quadrature", required=False)
    method = sec.get("method", "spherical_radial")
    if method not in DRAW_METHODS:
        raise ConfigError("quadrature.method", f"must be one of {DRAW_METHODS}, got {method!r}")
    defaults = QUADRATURE_DEFAULTS[method]
    check_keys(sec, {"method", "seed", *defaults}, "quadrature")
    out = {"method": method, "seed": as_int(sec.get("seed", 0), "quadrature.seed", 0)}
    for key, default in defaults.items():
        out[key] = as_int(sec.get(key, default), f"quadrature.{key}", 1)
    return out


def build_draws(prior: Prior, quad: dict) -> DrawSet:
    params = {k: v for k, v in quad.items() if k not in ("method", "seed")}
    return make_draws(prior, quad["method"], seed=quad["seed"], **params)


def resolve_algorithm(sec, where: str = "algorithm") -> tuple[dict, str, CoolingConfig | None]:
    if not isinstance(sec, dict):
        raise ConfigError(where, "must be an object")
    check_keys(sec, {"name", "cooling"}, where)
    name = sec.get("name", "SA")
    if name not in ("SA", "CE"):
        raise ConfigError(f"{where}.name", f"must be 'SA' or 'CE', got {name!r}")
    if name == "CE":
        return {"name": "CE"}, "CE", None
    cooling = sec.get("cooling", {})
    if not isinstance(cooling, dict):
        raise ConfigError(f"{where}.cooling", "must be an object")
    check_keys(cooling, {f.name for f in fields(CoolingConfig)}, f"{where}.cooling")
    try:
        cfg = CoolingConfig(**cooling)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{where}.cooling", str(exc)) from None
    return {"name": "SA", "cooling": cfg.to_dict()}, "SA", cfg


def resolve_multistart(doc: dict, seed_override: int | None) -> dict:
    sec = section(doc, "multistart", required=False)
    check_keys(sec, {"n_starts", "seed", "time_budget", "fairness"}, "multistart")
    out = {
        "n_starts": as_int(sec.get("n_starts", 1), "multistart.n_starts", 1),
        "seed": as_int(sec.get("seed", 0), "multistart.seed", 0),
        "time_budget": None,
        "fairness": bool(sec.get("fairness", False)),
    }
    if sec.get("time_budget") is not None:
        out["time_budget"] = as_number(sec["time_budget"], "multistart.time_budget", positive=True)
    if seed_override is not None:
        out["seed"] = seed_override
    return out


def resolve_outputs(doc: dict, default_prefix: str) -> dict:
    sec = section(doc, "outputs")
    check_keys(sec, {"dir", "prefix", "trace"}, "outputs")
    if "dir" not in sec:
        raise ConfigError("outputs.dir", "missing")
    if not isinstance(sec["dir"], str) or not sec["dir"]:
        raise ConfigError("outputs.dir", "must be a non-empty path string")
    prefix = sec.get("prefix", default_prefix)
    if not isinstance(prefix, str) or not prefix or os.sep in prefix:
        raise ConfigError("outputs.prefix", "must be a plain file-name prefix")
    return {"dir": sec["dir"], "prefix": prefix, "trace": bool(sec.get("trace", False))}


@dataclass
class CampaignConfig:
    """A resolved optimization campaign; ``resolved`` is the full config with defaults filled in."""

    resolved: dict
    spec: DesignSpec
    prior: Prior
    algorithm: str
    cooling: CoolingConfig | None
    multistart: dict
    outputs: dict

    @classmethod
    def from_dict(cls, doc: dict, seed_override: int | None = None) -> "CampaignConfig":
        check_keys(doc, {"problem", "prior", "quadrature", "algorithm", "multistart", "outputs"}, "<root>")
        problem, spec = resolve_problem(doc)
        prior_doc, prior = resolve_prior(section(doc, "prior"), spec)
        quad = resolve_quadrature(doc)
        alg_doc, algorithm, cooling = resolve_algorithm(section(doc, "algorithm", required=False))
        ms = resolve_multistart(doc, seed_override)
        outputs = resolve_outputs(doc, "optimize")
        resolved = {
            "problem": problem,
            "prior": prior_doc,
            "quadrature": quad,
            "algorithm": alg_doc,
            "multistart": ms,
            "outputs": outputs,
        }
        return cls(resolved, spec, prior, algorithm, cooling, ms, outputs)

    @property
    def quadrature(self) -> dict:
        return self.resolved["quadrature"]
