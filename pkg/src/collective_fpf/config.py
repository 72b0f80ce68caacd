"""TOML experiment configuration.

Sections: ``[model]`` (linear-Gaussian parameters), ``[finite]``
(finite-state parameters), ``[experiment]`` (grids, time step, seeds)
and ``[output]``.  Matrices are nested row-major arrays.  Every key is
optional; omissions fall back to the benchmark defaults, so an empty
file (or none at all) reproduces the reference scenario.

Observation noise may be given as ``obs_noise_var`` (the variance, as
the scenario is usually quoted) or ``obs_noise_std``.
"""

from __future__ import annotations

import math
from dataclasses import replace

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:
    import tomli as tomllib

from .beliefs import SimplexBelief
from .errors import ConfigError
from .harness import ExperimentConfig, default_finite_model, section5_model
from .models import FiniteStateModel, LinearGaussianModel

_KNOWN = {
    "model": {"A", "H", "Q", "obs_noise_var", "obs_noise_std", "prior_mean",
              "prior_cov"},
    "finite": {"jump_rates", "obs_values", "obs_noise_var", "obs_noise_std",
               "prior"},
    "experiment": {"dt", "horizon", "m_values", "n_values", "fixed_m",
                   "finite_n_values", "finite_horizon", "num_seeds", "seed",
                   "quad_var_ema"},
    "output": {"path", "format"},
}


def _check_keys(data: dict) -> None:
    for section, table in data.items():
        if section not in _KNOWN:
            raise ConfigError(f"unknown config section [{section}]")
        for key in table:
            if key not in _KNOWN[section]:
                raise ConfigError(f"unknown key {key!r} in section [{section}]")


def _noise_std(table: dict, section: str, default: float) -> float:
    if "obs_noise_std" in table and "obs_noise_var" in table:
        raise ConfigError(f"[{section}] sets both obs_noise_std and obs_noise_var")
    if "obs_noise_std" in table:
        return float(table["obs_noise_std"])
    if "obs_noise_var" in table:
        var = float(table["obs_noise_var"])
        if var <= 0:
            raise ConfigError(f"[{section}] obs_noise_var must be positive")
        return math.sqrt(var)
    return default


def _model_from(table: dict, base: LinearGaussianModel) -> LinearGaussianModel:
    def arr(key, fallback):
        return np.asarray(table[key], dtype=float) if key in table else fallback

    return LinearGaussianModel(
        A=arr("A", base.A), H=arr("H", base.H), Q=arr("Q", base.Q),
        obs_noise_std=_noise_std(table, "model", base.obs_noise_std),
        prior_mean=arr("prior_mean", base.prior_mean),
        prior_cov=arr("prior_cov", base.prior_cov))


def _finite_from(table: dict, base: FiniteStateModel) -> FiniteStateModel:
    def arr(key, fallback):
        return np.asarray(table[key], dtype=float) if key in table else fallback

    prior = (SimplexBelief(np.asarray(table["prior"], dtype=float))
             if "prior" in table else base.prior)
    return FiniteStateModel(
        jump_rates=arr("jump_rates", base.jump_rates),
        obs_values=arr("obs_values", base.obs_values),
        obs_noise_std=_noise_std(table, "finite", base.obs_noise_std),
        prior=prior)


def config_from_dict(data: dict) -> ExperimentConfig:
    _check_keys(data)
    try:
        config = ExperimentConfig(
            model=_model_from(data.get("model", {}), section5_model()),
            finite_model=_finite_from(data.get("finite", {}),
                                      default_finite_model()))
        exp = data.get("experiment", {})
        updates = {}
        for key in ("dt", "horizon", "finite_horizon", "quad_var_ema"):
            if key in exp:
                updates[key] = float(exp[key])
        for key in ("fixed_m", "num_seeds", "seed"):
            if key in exp:
                updates[key] = int(exp[key])
        for key in ("m_values", "n_values", "finite_n_values"):
            if key in exp:
                updates[key] = tuple(int(v) for v in exp[key])
        out = data.get("output", {})
        if "path" in out:
            updates["output_path"] = str(out["path"])
        if "format" in out:
            updates["output_format"] = str(out["format"])
        if updates:
            config = replace(config, **updates)
    except (TypeError, ValueError) as err:
        raise ConfigError(f"invalid config value: {err}") from err
    return config


def load_config(path: str | None) -> ExperimentConfig:
    """Parse a TOML config file; ``None`` yields the full default scenario."""
    if path is None:
        return ExperimentConfig()
    try:
        with open(path, "rb") as fh:
            data = tomllib.load(fh)
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    except tomllib.TOMLDecodeError as err:
        raise ConfigError(f"malformed TOML in {path}: {err}") from err
    return config_from_dict(data)
