"""Flat key-value configuration files for the sweep harness.

Syntax: one ``key = value`` per line; ``#`` starts a comment; blank
lines ignored. CLI flags override file values. Init ranges are written
as ``init_beta_1 = 1,2`` / ``init_sigma2_1 = 0.5,1.5`` (one key per
parameter component); truth vectors as comma lists.
"""
from __future__ import annotations

import numpy as np

from .harness import _DEFAULT_INIT_RANGES, _MODEL_TRUTH, ExperimentConfig
from .model import Theta

__all__ = ["ConfigError", "parse_kv_file", "build_experiment_config"]

_INT_KEYS = ("replicates", "iterations", "seed", "chains", "mcmc_steps",
             "precondition_after", "adapt_every", "window", "workers")
_FLOAT_KEYS = ("target_accept", "initial_step", "threshold")


class ConfigError(ValueError):
    """Malformed configuration file or option value."""


def parse_kv_file(path) -> dict[str, str]:
    values: dict[str, str] = {}
    with open(path) as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"{path}:{lineno}: expected 'key = value'")
            key, value = line.split("=", 1)
            values[key.strip()] = value.strip()
    return values


def _float_list(text: str) -> list[float]:
    return [float(part) for part in text.split(",") if part.strip()]


def build_experiment_config(mapping: dict[str, str]) -> ExperimentConfig:
    """Assemble an ExperimentConfig from string key-value pairs.

    Unknown keys are rejected so typos fail loudly.
    """
    values = dict(mapping)
    model = values.pop("model", "booth-hobert")
    if model not in _MODEL_TRUTH:
        raise ConfigError(f"unknown model {model!r}")

    kwargs: dict = {"model": model}
    try:
        for key in _INT_KEYS:
            if key in values:
                kwargs[key] = int(values.pop(key))
        for key in _FLOAT_KEYS:
            if key in values:
                kwargs[key] = float(values.pop(key))
        if "output_dir" in values:
            kwargs["output_dir"] = values.pop("output_dir")
        if "design_path" in values:
            kwargs["design_path"] = values.pop("design_path")
        if "algorithms" in values:
            kwargs["algorithms"] = tuple(
                a.strip() for a in values.pop("algorithms").split(",") if a.strip())

        truth_spec = _MODEL_TRUTH[model]
        beta = _float_list(values.pop("truth_beta", "")) or list(truth_spec["beta"])
        sigma2 = _float_list(values.pop("truth_sigma2", "")) or list(truth_spec["sigma2"])
        kwargs["truth"] = Theta(np.array(beta), np.array(sigma2))

        defaults = _DEFAULT_INIT_RANGES[model]
        p = len(beta)
        ranges = []
        for idx in range(p + len(sigma2)):
            key = (f"init_beta_{idx + 1}" if idx < p
                   else f"init_sigma2_{idx - p + 1}")
            if key in values:
                lo, hi = _float_list(values.pop(key))
                ranges.append((lo, hi))
            elif idx < len(defaults):
                ranges.append(defaults[idx])
            else:
                raise ConfigError(f"missing init range {key}")
        kwargs["init_ranges"] = tuple(ranges)
    except (TypeError, ValueError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(str(exc)) from exc

    if values:
        raise ConfigError(f"unknown config keys: {', '.join(sorted(values))}")
    if "seed" not in kwargs:
        raise ConfigError("a seed is required")
    kwargs.setdefault("replicates", 20)
    kwargs.setdefault("iterations", 2000 if model == "booth-hobert" else 4000)
    kwargs.setdefault("output_dir", "sweep_out")
    try:
        return ExperimentConfig(**kwargs)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
