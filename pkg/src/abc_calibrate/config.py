"""Run configuration: JSON file format, schema validation, loading.

A config drives both CLI stages: ``build`` consumes the model-set/table
fields, ``diagnose`` additionally needs the observed-data source and the
harness settings.  Only the output directory and thread count may be
overridden from the environment (ABC_CALIBRATE_OUT, ABC_CALIBRATE_THREADS).
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass
from pathlib import Path

import jsonschema
import numpy as np

from . import seeds
from .models import MODEL_SET_NAMES, ModelSet


class ConfigError(ValueError):
    """Configuration file is missing, malformed, or fails the schema."""


ENV_OUT = "ABC_CALIBRATE_OUT"
ENV_THREADS = "ABC_CALIBRATE_THREADS"

CONFIG_SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "type": "object",
    "required": ["model_set", "n_table", "n_obs", "out_dir"],
    "additionalProperties": False,
    "properties": {
        "model_set": {"enum": list(MODEL_SET_NAMES)},
        "n_table": {"type": "integer", "minimum": 1},
        "n_obs": {"type": "integer", "minimum": 1},
        "allocation": {"enum": ["equal", "proportional"]},
        "seed": {"type": "integer", "minimum": 0},
        "out_dir": {"type": "string", "minLength": 1},
        "table_path": {"type": "string", "minLength": 1},
        "observed": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "file": {"type": "string", "minLength": 1},
                "synthetic": {
                    "type": "object",
                    "required": ["model"],
                    "additionalProperties": False,
                    "properties": {
                        "model": {"type": "string", "minLength": 1},
                        "params": {"type": "array", "items": {"type": "number"}},
                        "seed": {"type": "integer", "minimum": 0},
                    },
                },
            },
            "oneOf": [{"required": ["file"]}, {"required": ["synthetic"]}],
        },
        "harness": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "c": {"type": "integer", "minimum": 1},
                "epsilons": {
                    "type": ["array", "null"],
                    "items": {"type": "number", "minimum": 0},
                    "minItems": 1,
                },
                "n_epsilons": {"type": "integer", "minimum": 1},
                "v_mode": {"enum": ["truncated", "prior"]},
                "adjust": {"enum": ["none", "regression"]},
                "model_prob_mode": {"enum": ["raw", "reweighted"]},
            },
        },
        "mc_replicates": {"type": "integer", "minimum": 1},
        "hist_bins": {"type": "integer", "minimum": 1},
        "cal_bins": {"type": "integer", "minimum": 1},
    },
}


@dataclass(frozen=True)
class ObservedSpec:
    file: str | None = None
    model: str | None = None
    params: tuple[float, ...] | None = None
    seed: int = 0


@dataclass(frozen=True)
class RunConfig:
    model_set: str
    n_table: int
    n_obs: int
    out_dir: str
    allocation: str = "equal"
    seed: int = 0
    table_path: str | None = None
    observed: ObservedSpec | None = None
    c: int = 200
    epsilons: tuple[float, ...] | None = None  # None -> distance-quantile grid
    n_epsilons: int = 20
    v_mode: str = "truncated"
    adjust: str = "none"
    model_prob_mode: str = "reweighted"
    mc_replicates: int = 999
    hist_bins: int = 20
    cal_bins: int = 10
    source_path: str | None = None


def load_config(path: str | Path) -> RunConfig:
    """Parse and schema-validate a JSON config file."""
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}")
    try:
        raw = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from exc
    try:
        jsonschema.validate(raw, CONFIG_SCHEMA)
    except jsonschema.ValidationError as exc:
        raise ConfigError(f"{path}: {exc.message}") from exc

    observed = None
    if "observed" in raw:
        obs = raw["observed"]
        if "file" in obs:
            file_path = (path.parent / obs["file"]).resolve()
            if not file_path.is_file():
                raise ConfigError(f"observed-data file not found: {file_path}")
            observed = ObservedSpec(file=str(file_path))
        else:
            syn = obs["synthetic"]
            observed = ObservedSpec(
                model=syn["model"],
                params=tuple(syn.get("params", [])),
                seed=syn.get("seed", 0),
            )

    harness = raw.get("harness", {})
    eps = harness.get("epsilons")
    if eps is not None:
        eps = tuple(float(e) for e in eps)
        if any(a <= b for a, b in zip(eps, eps[1:])):
            raise ConfigError(f"{path}: harness.epsilons must be strictly decreasing")

    out_dir = os.environ.get(ENV_OUT, raw["out_dir"])
    return RunConfig(
        model_set=raw["model_set"],
        n_table=raw["n_table"],
        n_obs=raw["n_obs"],
        out_dir=out_dir,
        allocation=raw.get("allocation", "equal"),
        seed=raw.get("seed", 0),
        table_path=raw.get("table_path"),
        observed=observed,
        c=harness.get("c", 200),
        epsilons=eps,
        n_epsilons=harness.get("n_epsilons", 20),
        v_mode=harness.get("v_mode", "truncated"),
        adjust=harness.get("adjust", "none"),
        model_prob_mode=harness.get("model_prob_mode", "reweighted"),
        mc_replicates=raw.get("mc_replicates", 999),
        hist_bins=raw.get("hist_bins", 20),
        cal_bins=raw.get("cal_bins", 10),
        source_path=str(path),
    )


def observed_data(config: RunConfig, model_set: ModelSet) -> np.ndarray:
    """Materialise the observed dataset: read the file, or simulate it."""
    if config.observed is None:
        raise ConfigError("config has no observed-data source (required for diagnose)")
    spec = config.observed
    if spec.file is not None:
        data = np.loadtxt(spec.file, ndmin=1)
        if data.size == 0:
            raise ConfigError(f"observed-data file {spec.file} is empty")
        return np.asarray(data, dtype=float)
    model_id = model_set.model_id_of(spec.model)
    model = model_set.model(model_id)
    if len(spec.params or ()) != model.param_dim:
        raise ConfigError(
            f"model {spec.model!r} expects {model.param_dim} parameters, "
            f"got {len(spec.params or ())}"
        )
    rng = seeds.rng(spec.seed, seeds.OBSERVED)
    return model.simulate(np.asarray(spec.params, dtype=float), config.n_obs, rng)


def default_threads() -> int:
    env = os.environ.get(ENV_THREADS)
    if env is not None:
        try:
            value = int(env)
        except ValueError:
            raise ConfigError(f"{ENV_THREADS} must be an integer, got {env!r}") from None
        if value < 1:
            raise ConfigError(f"{ENV_THREADS} must be >= 1")
        return value
    return os.cpu_count() or 1
