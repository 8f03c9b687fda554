"""Run configuration: JSON schema, defaults and tolerance windows."""

from __future__ import annotations

import copy
import json

import jsonschema

from .cones import Cone, Halfspace, _ConeLike

EXPERIMENTS = ("sample", "clt", "llt", "marginals", "scaling", "moments")


class ConfigError(ValueError):
    pass


_vec = {"type": "array", "items": {"type": "number"}, "minItems": 1}
_window = {"type": "array", "items": {"type": "number"}, "minItems": 2, "maxItems": 2}

SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "properties": {
        "model": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "d": {"type": "integer", "minimum": 2},
                "cone": {"type": "object"},
                "subcone": {"type": "array", "items": {"type": "object"}},
                "k": _vec,
                "n": {"type": "number", "exclusiveMinimum": 0},
                "seed": {"type": "integer", "minimum": 0},
            },
        },
        "experiment": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "name": {"enum": list(EXPERIMENTS)},
                "label": {"type": "string", "pattern": "^[A-Za-z0-9_.-]+$"},
                "M": {"type": "integer", "minimum": 1},
                "mode": {"enum": ["P", "Q"]},
                "max_trials": {"type": "integer", "minimum": 1},
                "directions": {"type": "array", "items": _vec},
                "n_grid": {"type": "array", "items": {"type": "number", "exclusiveMinimum": 0}},
                "beta_grid": {"type": "array", "items": {"type": "number", "exclusiveMinimum": 0}},
                "box": {"type": "integer", "minimum": 1},
                "tolerances": {"type": "object"},
                "negative_control": {
                    "type": "object",
                    "additionalProperties": False,
                    "properties": {
                        "mean_scale": {"type": "number"},
                        "cov_scale": {"type": "number"},
                        "beta_exponent": {"type": "number", "exclusiveMinimum": 0},
                    },
                },
            },
        },
        "output": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "dir": {"type": "string"},
                "formats": {"type": "array", "items": {"enum": ["csv", "json"]}},
            },
        },
    },
}

# every acceptance threshold used by the experiments
TOLERANCES = {
    "alpha": 0.01,
    "mean_norm_factor": 4.0,
    "marginal_rel_P": 0.10,
    "marginal_rel_Q": 0.20,
    "llt_ratio": [0.5, 1.3],
    "slope_mean_halfwidth": 0.15,
    "slope_cov_halfwidth": 0.15,
    "slope_lyapunov_halfwidth": 0.10,
    "slope_sigma_halfwidth": 0.15,
    "density_ratio": [0.3, 0.7],
    "density_limit_rel": 0.005,
}

DEFAULTS = {
    "model": {"d": 2, "k": [1, 1], "n": 10000, "seed": 20261014},
    "experiment": {"label": "default", "M": 2000, "mode": "P", "max_trials": 2_000_000,
                   "directions": [], "tolerances": {}, "negative_control": {}},
    "output": {"dir": "runs", "formats": ["csv", "json"]},
}

EXPERIMENT_DEFAULTS = {
    "sample": {"M": 10},
    "clt": {"M": 2000},
    "llt": {"n_grid": [10, 20, 30]},
    "marginals": {"M": 5000, "directions": [[1, -1], [1, 1]]},
    "scaling": {"n_grid": [1000, 10000, 100000], "beta_grid": [0.2, 0.1, 0.05, 0.025]},
    "moments": {},
}


def _merge(base: dict, over: dict) -> dict:
    out = copy.deepcopy(base)
    for key, val in over.items():
        if isinstance(val, dict) and isinstance(out.get(key), dict):
            out[key] = _merge(out[key], val)
        else:
            out[key] = copy.deepcopy(val)
    return out


def resolve(raw: dict | None, experiment: str) -> dict:
    """Validate ``raw`` and fill every default; the result is echoed in manifests."""
    raw = raw or {}
    try:
        jsonschema.validate(raw, SCHEMA)
    except jsonschema.ValidationError as exc:
        raise ConfigError(f"invalid config: {exc.message} at {list(exc.absolute_path)}") from None
    name = raw.get("experiment", {}).get("name", experiment)
    if name != experiment:
        raise ConfigError(f"config is for experiment {name!r}, not {experiment!r}")
    cfg = _merge(DEFAULTS, {"experiment": EXPERIMENT_DEFAULTS[experiment]})
    cfg = _merge(cfg, raw)
    cfg["experiment"]["name"] = experiment
    cfg["experiment"]["tolerances"] = _merge(TOLERANCES, cfg["experiment"]["tolerances"])
    unknown = set(cfg["experiment"]["tolerances"]) - set(TOLERANCES)
    if unknown:
        raise ConfigError(f"unknown tolerances: {sorted(unknown)}")
    model = cfg["model"]
    if "cone" not in model:
        model["cone"] = Cone.orthant(model["d"]).to_json()
    model["d"] = int(model["cone"].get("d", model["d"]))
    if len(model["k"]) != model["d"]:
        raise ConfigError("k must have d coordinates")
    for u in cfg["experiment"]["directions"]:
        if len(u) != model["d"] or not any(u):
            raise ConfigError("directions must be nonzero d-vectors")
    return cfg


def load(path, experiment: str) -> dict:
    try:
        with open(path) as fh:
            raw = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    return resolve(raw, experiment)


def model_cone(cfg: dict) -> tuple[Cone, _ConeLike | None]:
    """The model cone and the optional subcone under study."""
    try:
        cone = Cone.from_json(cfg["model"]["cone"])
    except (ValueError, KeyError, TypeError) as exc:
        raise ConfigError(f"invalid cone: {exc}") from None
    hs = cfg["model"].get("subcone")
    sub = cone.restrict(*(Halfspace.from_json(h) for h in hs)) if hs else None
    return cone, sub
