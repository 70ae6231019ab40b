"""Key-value run configuration.

A config file is a list of ``key = value`` lines (``#`` starts a comment), for
example::

    suite = quadratic
    n = 64
    dim = 8
    batch_sizes = 1, 4, 16, 64
    seeds = 0:20
    stop = grad_norm_below
    stop_value = 1e-3

Lists are comma- or space-separated; ``a:b`` denotes the integers
``a, ..., b-1``.
"""

from __future__ import annotations

import configparser

from .linesearch import ArmijoConfig
from .optimizer import StopRule

__all__ = [
    "ConfigError",
    "armijo_from",
    "float_list",
    "int_list",
    "load_config",
    "parse_config",
    "stop_from",
    "sweep_config_from",
]

SECTION = "run"
SUITE_KEYS = (
    "suite",
    "n",
    "dim",
    "seed",
    "condition_range",
    "center_scale",
    "reg",
    "label_noise",
    "feature_scale",
    "widths",
    "n_features",
    "n_classes",
)


class ConfigError(ValueError):
    """Malformed or inconsistent configuration."""


def parse_config(text) -> dict:
    parser = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#",))
    parser.optionxform = str
    try:
        parser.read_string(f"[{SECTION}]\n" + text)
    except configparser.Error as exc:
        raise ConfigError(str(exc)) from None
    return dict(parser[SECTION])


def load_config(path) -> dict:
    try:
        with open(path) as fh:
            return parse_config(fh.read())
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None


def _items(value):
    return [v for v in str(value).replace(",", " ").split() if v]


def int_list(value) -> tuple:
    out = []
    for item in _items(value):
        if ":" in item:
            lo, hi = item.split(":")
            out.extend(range(int(lo), int(hi)))
        else:
            out.append(int(item))
    return tuple(out)


def float_list(value) -> tuple:
    return tuple(float(v) for v in _items(value))


def _get(cfg, key, cast, default=None):
    if key not in cfg or cfg[key] == "":
        if default is None:
            raise ConfigError(f"missing required key {key!r}")
        return default
    try:
        return cast(cfg[key])
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad value for {key!r}: {cfg[key]!r} ({exc})") from None


def armijo_from(cfg) -> ArmijoConfig:
    """Armijo hyperparameters; defaults are ``c=0.1, delta=0.9, gamma=2, alpha_max=10``."""
    try:
        return ArmijoConfig(
            c=_get(cfg, "c", float, 0.1),
            delta=_get(cfg, "delta", float, 0.9),
            gamma=_get(cfg, "gamma", float, 2.0),
            alpha_max=_get(cfg, "alpha_max", float, 10.0),
            max_backtracks=_get(cfg, "max_backtracks", int, 200),
            alpha_floor=_get(cfg, "alpha_floor", float, 1e-12),
        )
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


def stop_from(cfg) -> StopRule:
    kind = cfg.get("stop", "grad_norm_below")
    cap = _get(cfg, "cap", int, 100_000)
    value = _get(cfg, "stop_value", float)
    try:
        if kind == "max_steps":
            return StopRule.max_steps(int(value))
        return StopRule(kind, value, cap)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


def suite_mapping(cfg) -> dict:
    return {k: cfg[k] for k in SUITE_KEYS if k in cfg}


def sweep_config_from(cfg):
    # local import: harness pulls in the process pool machinery
    from .harness import SweepConfig

    try:
        return SweepConfig(
            suite=suite_mapping(cfg),
            batch_sizes=_get(cfg, "batch_sizes", int_list),
            seeds=_get(cfg, "seeds", int_list),
            stop=stop_from(cfg),
            optimizer=cfg.get("optimizer", "armijo"),
            armijo=armijo_from(cfg),
            alpha=_get(cfg, "alpha", float, 0.0) or None,
            sampling=cfg.get("sampling", "with_replacement"),
            init_seed=_get(cfg, "init_seed", int, 0),
            eps=_get(cfg, "eps", float, 0.0) or None,
            output_dir=cfg.get("output_dir") or None,
            workers=_get(cfg, "workers", int, 1),
        )
    except ConfigError:
        raise
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
