"""Command-line entry point.

Exit status is 0 on success, 1 when a validation fails and 2 on a
configuration error.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import os
import sys

import numpy as np

from .config import (
    ConfigError,
    armijo_from,
    float_list,
    int_list,
    load_config,
    suite_mapping,
    sweep_config_from,
)
from .estimators import default_probe_points, estimate_lipschitz, estimate_sigma_sq
from .harness import (
    emit_plot_data,
    estimate_critical_pipeline,
    pipeline_from_pairs,
    run_sweep,
    theory_constants_for,
    validate_bound,
)
from .linesearch import verify_counterexample
from .objectives import suite_from_config
from .theory import (
    TheoryConstants,
    TheoryWindowError,
    constants_armijo_case1,
    constants_armijo_case2,
    constants_constant_lr,
    critical_batch,
    sfo_complexity,
    steps_needed,
)

EXIT_OK, EXIT_FAILED, EXIT_CONFIG = 0, 1, 2

OVERRIDES = (
    ("armijo_c", "c"),
    ("armijo_delta", "delta"),
    ("armijo_gamma", "gamma"),
    ("alpha_max", "alpha_max"),
    ("max_backtracks", "max_backtracks"),
    ("out", "output_dir"),
    ("workers", "workers"),
)


def _fmt(x):
    return format(float(x), ".17g")


def _load(args) -> dict:
    cfg = load_config(args.config) if args.config else {}
    for attr, key in OVERRIDES:
        value = getattr(args, attr, None)
        if value is not None:
            cfg[key] = str(value)
    for item in args.set or ():
        if "=" not in item:
            raise ConfigError(f"--set expects KEY=VALUE, got {item!r}")
        key, value = item.split("=", 1)
        cfg[key.strip()] = value.strip()
    return cfg


def _suite_and_start(cfg):
    obj = suite_from_config(suite_mapping(cfg))
    return obj, obj.initial_point(int(cfg.get("init_seed", 0)))


def _noise(cfg, obj, theta0):
    points = default_probe_points(
        obj,
        theta0,
        armijo_from(cfg),
        int(cfg.get("pilot_batch", 1)),
        seed=int(cfg.get("pilot_seed", 0)),
        pilot_steps=int(cfg.get("pilot_steps", 200)),
    )
    return estimate_sigma_sq(obj, points, cfg.get("aggregation", "max"))


def _constants(cfg, obj, theta0):
    sigma_sq = _noise(cfg, obj, theta0).sigma_sq
    if cfg.get("optimizer", "armijo") == "constant":
        return theory_constants_for(obj, theta0, sigma_sq, alpha=float(cfg["alpha"]))
    return theory_constants_for(obj, theta0, sigma_sq, cfg=armijo_from(cfg))


def _theory_constants(cfg) -> TheoryConstants:
    regime = cfg.get("regime", "given")
    if regime == "given":
        return TheoryConstants.given(float(cfg["C1"]), float(cfg["C2"]))
    num = {k: float(cfg[k]) for k in ("f0", "f_star", "L_n", "sigma_sq")}
    if regime == "constant_lr":
        return constants_constant_lr(alpha=float(cfg["alpha"]), **num)
    hyper = armijo_from(cfg)
    common = dict(alpha_max=hyper.alpha_max, delta=hyper.delta, c=hyper.c, **num)
    if regime == "armijo_case1":
        return constants_armijo_case1(L_max=float(cfg["L_max"]), **common)
    if regime == "armijo_case2":
        return constants_armijo_case2(**common)
    raise ConfigError(f"unknown regime {regime!r}")


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------


def cmd_sweep(args, out):
    cfg = _load(args)
    sweep = sweep_config_from(cfg)
    out_dir = sweep.output_dir or "."
    tc = None
    if sweep.eps:
        obj, theta0 = _suite_and_start(cfg)
        tc = _constants(cfg, obj, theta0)
    result = run_sweep(sweep, theory=tc)
    if not sweep.output_dir:
        result.write(out_dir)
    emit_plot_data(out_dir, result, tc, sweep.eps)
    payload = {
        "b_star_measured": result.b_star_measured,
        "not_reached": {str(b): int(m) for b, m in zip(result.batch_sizes, result.not_reached)},
    }
    if tc is not None:
        payload.update(C1=tc.C1, C2=tc.C2, regime=tc.regime, b_star_theory=critical_batch(tc, sweep.eps))
    with open(os.path.join(out_dir, "result.json"), "w") as fh:
        json.dump(payload, fh, indent=1, sort_keys=True)
    for row in result.summary_rows():
        print(",".join(str(v) if isinstance(v, int) else _fmt(v) for v in row), file=out)
    print(f"b_star_measured={result.b_star_measured}", file=out)
    return EXIT_OK


def cmd_theory(args, out):
    cfg = _load(args)
    tc = _theory_constants(cfg)
    eps = float(cfg["eps"])
    b_star = critical_batch(tc, eps)
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(("b", "K", "K_steps", "N", "b_star"))
    threshold = tc.C2 / eps**2
    for b in float_list(cfg["batch_sizes"]):
        if b <= threshold:
            writer.writerow((_fmt(b), "inf", "inf", "inf", _fmt(b_star)))
            continue
        K = steps_needed(tc, eps, b)
        writer.writerow((_fmt(b), _fmt(K), math.ceil(K), _fmt(sfo_complexity(tc, eps, b)), _fmt(b_star)))
    return EXIT_OK


def cmd_estimate(args, out):
    cfg = _load(args)
    obj, theta0 = _suite_and_start(cfg)
    noise = _noise(cfg, obj, theta0)
    lip = estimate_lipschitz(
        obj,
        probes=int(cfg.get("lipschitz_probes", 200)),
        radius=float(cfg.get("lipschitz_radius", 1.0)),
        seed=int(cfg.get("seed", 0)),
        center=theta0,
    )
    payload = {"noise": noise.as_dict(), "lipschitz": lip.as_dict()}
    if obj.lipschitz is not None:
        payload["lipschitz"]["analytic_L_max"] = float(np.max(obj.lipschitz))
        payload["lipschitz"]["analytic_L_n"] = float(np.mean(obj.lipschitz))
    json.dump(payload, out, indent=1, sort_keys=True)
    out.write("\n")
    return EXIT_OK


def cmd_validate_bound(args, out):
    cfg = _load(args)
    obj, theta0 = _suite_and_start(cfg)
    tc = _constants(cfg, obj, theta0)
    constant = cfg.get("optimizer", "armijo") == "constant"
    report = validate_bound(
        obj,
        tc,
        int_list(cfg.get("K_values", "10 100")),
        int_list(cfg["batch_sizes"]),
        int_list(cfg.get("seeds", "0:20")),
        theta0,
        cfg=None if constant else armijo_from(cfg),
        alpha=float(cfg["alpha"]) if constant else None,
        sampling=cfg.get("sampling", "with_replacement"),
    )
    for line in report.lines():
        print(line, file=out)
    return EXIT_OK if report.ok else EXIT_FAILED


def _pairs(text):
    pairs = []
    for item in str(text).split(","):
        c, b = item.split(":")
        pairs.append((float(c), float(b)))
    if len(pairs) != 2:
        raise ConfigError("pairs needs exactly two c:b_star entries")
    return pairs


def cmd_critical_pipeline(args, out):
    cfg = _load(args)
    c_predict = float(cfg["c_predict"])
    if "pairs" in cfg:
        hyper = armijo_from(cfg)
        p1, p2 = _pairs(cfg["pairs"])
        measured = float(cfg["b_star_measured"]) if "b_star_measured" in cfg else None
        report = pipeline_from_pairs(p1, p2, hyper.delta, hyper.alpha_max, c_predict, measured)
    else:
        report = estimate_critical_pipeline(sweep_config_from(cfg), float_list(cfg["c_values"]), c_predict)
    json.dump(report.as_dict(), out, indent=1, sort_keys=True)
    out.write("\n")
    return EXIT_OK


def cmd_counterexample(args, out):
    report = verify_counterexample(alpha=args.alpha, theta=args.theta, c=args.c, alpha_max=args.alpha_max)
    for line in report.lines():
        print(line, file=out)
    return EXIT_OK if report.is_counterexample else EXIT_FAILED


def build_parser():
    parser = argparse.ArgumentParser(prog="armijo-sgd", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    def with_config(name, func, help_text):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", help="key = value config file")
        p.add_argument("--set", action="append", metavar="KEY=VALUE", help="override a config key")
        p.add_argument("--armijo-c", type=float)
        p.add_argument("--armijo-delta", type=float)
        p.add_argument("--armijo-gamma", type=float)
        p.add_argument("--alpha-max", type=float)
        p.add_argument("--max-backtracks", type=int)
        p.add_argument("--out", help="output directory")
        p.add_argument("--workers", type=int)
        p.set_defaults(func=func)
        return p

    with_config("sweep", cmd_sweep, "batch-size sweep; writes sweep.csv, summary.csv and plot data")
    with_config("theory", cmd_theory, "K(b), N(b) and b* table as CSV")
    with_config("estimate", cmd_estimate, "noise and Lipschitz estimates as JSON")
    with_config("validate-bound", cmd_validate_bound, "check the convergence bound empirically")
    with_config("critical-pipeline", cmd_critical_pipeline, "fit X, L_n from two c values and predict b*")

    p = sub.add_parser("counterexample", help="Armijo-accepted step below the claimed lower bound")
    p.add_argument("--alpha", type=float, default=0.5)
    p.add_argument("--theta", type=float, default=1.0)
    p.add_argument("--c", type=float, default=0.1)
    p.add_argument("--alpha-max", type=float, default=1.0)
    p.set_defaults(func=cmd_counterexample)
    return parser


def main(argv=None, out=None) -> int:
    out = sys.stdout if out is None else out
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args, out)
    except (ConfigError, TheoryWindowError, KeyError) as exc:
        msg = f"missing required key {exc}" if isinstance(exc, KeyError) else str(exc)
        print(f"configuration error: {msg}", file=sys.stderr)
        return EXIT_CONFIG
    except ValueError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
