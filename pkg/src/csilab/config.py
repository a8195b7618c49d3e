"""Versioned JSON configuration files.

Scenario file::

    {"version": 1, "scenario": {"array": {...}, "ofdm": {...}, "path_count_range": [4, 12], ...}}

Model file::

    {"version": 1, "model": "deepcmc" | "analog-deepcmc", "params": {...}}
"""

from __future__ import annotations

import json

from .channel_gen import ScenarioConfig
from .errors import ConfigError

CONFIG_VERSION = 1
MODEL_KINDS = ("deepcmc", "analog-deepcmc")


def read_json(path) -> dict:
    try:
        with open(path, encoding="utf-8") as fh:
            data = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from exc
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: expected a JSON object")
    if data.get("version", CONFIG_VERSION) != CONFIG_VERSION:
        raise ConfigError(f"{path}: unsupported config version {data.get('version')}")
    return data


def load_scenario(path) -> ScenarioConfig:
    data = read_json(path)
    try:
        return ScenarioConfig.from_dict(data.get("scenario", {}))
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{path}: {exc}") from exc


def build_model(path, **overrides):
    """Instantiate an unfitted estimator from a model config file."""
    from .analog import AnalogDeepCMC
    from .codec.deepcmc import DeepCMC

    data = read_json(path)
    kind = data.get("model", "deepcmc")
    if kind not in MODEL_KINDS:
        raise ConfigError(f"{path}: model must be one of {MODEL_KINDS}, got {kind!r}")
    params = dict(data.get("params", {}))
    params.update({k: v for k, v in overrides.items() if v is not None})
    cls = DeepCMC if kind == "deepcmc" else AnalogDeepCMC
    if kind == "analog-deepcmc":
        params.pop("rd_lambda", None)
    if "encoder_layers" in params:
        params["encoder_layers"] = [tuple(l) for l in params["encoder_layers"]]
    try:
        return cls(**params)
    except TypeError as exc:
        raise ConfigError(f"{path}: {exc}") from exc
