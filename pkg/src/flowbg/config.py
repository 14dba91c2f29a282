"""Run-configuration schema: validation, defaults, and construction helpers.

A run config is one JSON document with optional sections

    system      {K, D, energy: {a, b, d0}}
    model       {type: "eqflow" | "realnvp", hyperparams: {...}}
    train       {batch_size, n_iters_ml, n_iters_mixed, learning_rate,
                 kl_weight, grad_clip}
    mcmc        {n_samples, burn_in, thinning, proposal_scale, init}
    experiment  {name, split_fraction, noise_scale, n_generate}
    paths       {dataset, checkpoint, samples, minima, metrics, loss, chain_meta}
    seed        integer

Validation happens before any computation and rejects unknown keys at every
level, so typos fail fast instead of silently falling back to defaults.
"""

from __future__ import annotations

import copy
from dataclasses import dataclass, field

import numpy as np

from .energy import DoubleWell, DoubleWellParams
from .errors import ConfigError
from .mcmc import McmcConfig
from .training import TrainConfig

__all__ = ["RunConfig", "validate_config", "load_config", "DEFAULT_CONFIG"]

EQFLOW_HP_KEYS = {"M": int, "r_max": float, "n_steps": int, "t0": float, "t1": float}
REALNVP_HP_KEYS = {"L": int, "hidden": int, "clamp": float, "init_seed": int}

DEFAULT_CONFIG: dict = {
    "seed": 0,
    "system": {"K": 4, "D": 2, "energy": {"a": -4.0, "b": 0.9, "d0": 4.0}},
    "model": {"type": "eqflow", "hyperparams": {}},
    "train": {
        "batch_size": 256,
        "n_iters_ml": 2000,
        "n_iters_mixed": 2000,
        "learning_rate": 1e-3,
        "kl_weight": 0.5,
        "grad_clip": 100.0,
    },
    "mcmc": {
        "n_samples": 10000,
        "burn_in": 0,
        "thinning": 1,
        "proposal_scale": 0.1,
        "init": None,
    },
    "experiment": {
        "name": "experiment1",
        "split_fraction": 0.5,
        "noise_scale": 0.05,
        "n_generate": 500,
    },
    "paths": {},
}

_PATH_KEYS = {"dataset", "checkpoint", "samples", "minima", "metrics", "loss", "chain_meta"}


def _require_keys(section: str, given: dict, allowed) -> None:
    unknown = set(given) - set(allowed)
    if unknown:
        raise ConfigError(f"unknown key(s) in {section}: {sorted(unknown)}")


def _typed(section: str, key: str, value, kind):
    try:
        if kind is float:
            if isinstance(value, bool):
                raise TypeError
            return float(value)
        if kind is int:
            if isinstance(value, bool) or (isinstance(value, float) and not value.is_integer()):
                raise TypeError
            return int(value)
        if kind is str:
            if not isinstance(value, str):
                raise TypeError
            return value
    except (TypeError, ValueError):
        pass
    raise ConfigError(f"{section}.{key} must be of type {kind.__name__}, got {value!r}")


@dataclass
class RunConfig:
    seed: int
    K: int
    D: int
    energy_params: DoubleWellParams
    model_type: str
    model_hyperparams: dict
    train: TrainConfig
    mcmc: McmcConfig
    experiment: dict
    paths: dict = field(default_factory=dict)

    def energy(self) -> DoubleWell:
        return DoubleWell(self.energy_params)

    def to_dict(self) -> dict:
        return {
            "seed": self.seed,
            "system": {"K": self.K, "D": self.D,
                       "energy": {"a": self.energy_params.a, "b": self.energy_params.b,
                                  "d0": self.energy_params.d0}},
            "model": {"type": self.model_type, "hyperparams": dict(self.model_hyperparams)},
            "train": {k: v for k, v in vars(self.train).items() if k != "seed"},
            "mcmc": {"n_samples": self.mcmc.n_samples, "burn_in": self.mcmc.burn_in,
                     "thinning": self.mcmc.thinning, "proposal_scale": self.mcmc.proposal_scale,
                     "init": None if self.mcmc.init is None else
                     [[float(v) for v in row] for row in self.mcmc.init]},
            "experiment": dict(self.experiment),
            "paths": dict(self.paths),
        }


def validate_config(doc: dict) -> RunConfig:
    """Validate a raw config dict against the schema and fill defaults."""
    if not isinstance(doc, dict):
        raise ConfigError("config must be a JSON object")
    _require_keys("config", doc, DEFAULT_CONFIG.keys())
    merged = copy.deepcopy(DEFAULT_CONFIG)

    seed = _typed("config", "seed", doc.get("seed", merged["seed"]), int)

    system = doc.get("system", {})
    _require_keys("system", system, {"K", "D", "energy"})
    K = _typed("system", "K", system.get("K", merged["system"]["K"]), int)
    D = _typed("system", "D", system.get("D", merged["system"]["D"]), int)
    if K < 2:
        raise ConfigError(f"system.K must be >= 2, got {K}")
    if D not in (2, 3):
        raise ConfigError(f"system.D must be 2 or 3, got {D}")
    energy_in = system.get("energy", {})
    _require_keys("system.energy", energy_in, {"a", "b", "d0"})
    e_def = merged["system"]["energy"]
    try:
        energy_params = DoubleWellParams(
            a=_typed("system.energy", "a", energy_in.get("a", e_def["a"]), float),
            b=_typed("system.energy", "b", energy_in.get("b", e_def["b"]), float),
            d0=_typed("system.energy", "d0", energy_in.get("d0", e_def["d0"]), float),
        )
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc

    model = doc.get("model", {})
    _require_keys("model", model, {"type", "hyperparams"})
    model_type = _typed("model", "type", model.get("type", "eqflow"), str)
    if model_type not in ("eqflow", "realnvp"):
        raise ConfigError(f"model.type must be 'eqflow' or 'realnvp', got {model_type!r}")
    hp_schema = EQFLOW_HP_KEYS if model_type == "eqflow" else REALNVP_HP_KEYS
    hp_in = model.get("hyperparams", {})
    _require_keys("model.hyperparams", hp_in, hp_schema.keys())
    hyperparams = {k: _typed("model.hyperparams", k, v, hp_schema[k]) for k, v in hp_in.items()}

    train_in = doc.get("train", {})
    _require_keys("train", train_in, set(merged["train"].keys()))
    t = dict(merged["train"])
    t.update(train_in)
    try:
        train = TrainConfig(
            batch_size=_typed("train", "batch_size", t["batch_size"], int),
            n_iters_ml=_typed("train", "n_iters_ml", t["n_iters_ml"], int),
            n_iters_mixed=_typed("train", "n_iters_mixed", t["n_iters_mixed"], int),
            learning_rate=_typed("train", "learning_rate", t["learning_rate"], float),
            kl_weight=_typed("train", "kl_weight", t["kl_weight"], float),
            grad_clip=_typed("train", "grad_clip", t["grad_clip"], float),
            seed=seed,
        ).validate()
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc

    mcmc_in = doc.get("mcmc", {})
    _require_keys("mcmc", mcmc_in, set(merged["mcmc"].keys()))
    m = dict(merged["mcmc"])
    m.update(mcmc_in)
    init = m["init"]
    if init is not None:
        init = np.asarray(init, dtype=np.float64)
        if init.shape != (K, D):
            raise ConfigError(f"mcmc.init must have shape ({K}, {D}), got {init.shape}")
    try:
        mcmc = McmcConfig(
            n_samples=_typed("mcmc", "n_samples", m["n_samples"], int),
            burn_in=_typed("mcmc", "burn_in", m["burn_in"], int),
            thinning=_typed("mcmc", "thinning", m["thinning"], int),
            proposal_scale=_typed("mcmc", "proposal_scale", m["proposal_scale"], float),
            seed=seed,
            init=init,
        ).validate()
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc

    exp_in = doc.get("experiment", {})
    _require_keys("experiment", exp_in, set(merged["experiment"].keys()))
    exp = dict(merged["experiment"])
    exp.update(exp_in)
    exp["name"] = _typed("experiment", "name", exp["name"], str)
    exp["split_fraction"] = _typed("experiment", "split_fraction", exp["split_fraction"], float)
    exp["noise_scale"] = _typed("experiment", "noise_scale", exp["noise_scale"], float)
    exp["n_generate"] = _typed("experiment", "n_generate", exp["n_generate"], int)
    if not 0.0 < exp["split_fraction"] < 1.0:
        raise ConfigError("experiment.split_fraction must lie strictly between 0 and 1")

    paths = doc.get("paths", {})
    _require_keys("paths", paths, _PATH_KEYS)
    paths = {k: _typed("paths", k, v, str) for k, v in paths.items()}

    return RunConfig(seed=seed, K=K, D=D, energy_params=energy_params,
                     model_type=model_type, model_hyperparams=hyperparams,
                     train=train, mcmc=mcmc, experiment=exp, paths=paths)


def load_config(path) -> RunConfig:
    import json

    try:
        with open(path) as fh:
            doc = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"invalid JSON in {path}: {exc}") from exc
    return validate_config(doc)
