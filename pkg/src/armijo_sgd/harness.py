"""Batch-size sweeps, empirical bound checks and critical-batch estimation."""

from __future__ import annotations

import csv
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .linesearch import ArmijoConfig
from .objectives import FiniteSumObjective, full_value, lipschitz_summary, suite_from_config
from .optimizer import (
    BatchSampler,
    StopRule,
    min_grad_norm_sq,
    run_armijo_sgd,
    run_constant_sgd,
    steps_to_threshold,
)
from .theory import (
    TheoryConstants,
    bound_rhs,
    constants_armijo_case1,
    constants_armijo_case2,
    constants_constant_lr,
    critical_batch,
    estimate_X_Ln,
    sfo_complexity,
    steps_needed,
)

__all__ = [
    "BoundReport",
    "PipelineReport",
    "SweepConfig",
    "SweepResult",
    "emit_plot_data",
    "estimate_critical_pipeline",
    "estimated_lower_bound",
    "pipeline_from_pairs",
    "read_plot_data",
    "read_summary",
    "run_sweep",
    "theory_constants_for",
    "validate_bound",
]

SWEEP_FIELDS = ("b", "seed", "K", "N", "reached")
SUMMARY_FIELDS = ("b", "K_median", "K_mean", "N", "not_reached")


def _fmt(x):
    if x is None:
        return ""
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return format(float(x), ".17g")


def _write_csv(path, header, rows):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([_fmt(v) for v in row])


@dataclass(frozen=True)
class SweepConfig:
    """One batch-size sweep.

    ``suite`` is a flat mapping understood by
    :func:`~armijo_sgd.objectives.suite_from_config`.  The starting point is
    ``obj.initial_point(init_seed)`` for every run; ``seeds`` only drive batch
    sampling.  ``optimizer`` is ``"armijo"`` or ``"constant"`` (with
    ``alpha``).
    """

    suite: dict
    batch_sizes: tuple
    seeds: tuple
    stop: StopRule
    optimizer: str = "armijo"
    armijo: ArmijoConfig = field(default_factory=lambda: ArmijoConfig(c=0.1, delta=0.9, gamma=2.0, alpha_max=10.0))
    alpha: float | None = None
    sampling: str = "with_replacement"
    init_seed: int = 0
    eps: float | None = None
    output_dir: str | None = None
    workers: int = 1

    def __post_init__(self):
        if not self.batch_sizes:
            raise ValueError("batch_sizes must be nonempty")
        if not self.seeds:
            raise ValueError("need at least one seed")
        if self.stop.kind == "max_steps":
            raise ValueError("a sweep needs a threshold stop rule")
        if self.optimizer not in ("armijo", "constant"):
            raise ValueError(f"unknown optimizer {self.optimizer!r}")
        if self.optimizer == "constant" and not (self.alpha and self.alpha > 0):
            raise ValueError("constant optimizer needs alpha > 0")
        if self.workers < 1:
            raise ValueError("workers must be at least 1")

    def build_suite(self) -> FiniteSumObjective:
        return suite_from_config(self.suite)


@dataclass
class SweepResult:
    """Per-batch-size aggregates of a sweep.

    ``K_median`` and ``K_mean`` are taken over seeds that reached the
    threshold (NaN when none did); ``N = K_median * b``.
    """

    batch_sizes: np.ndarray
    K_median: np.ndarray
    K_mean: np.ndarray
    N: np.ndarray
    not_reached: np.ndarray
    runs: list = field(default_factory=list)
    theory: TheoryConstants | None = None
    eps: float | None = None

    @property
    def b_star_measured(self):
        """Batch size with the smallest measured ``N`` (smallest ``b`` on ties)."""
        finite = np.isfinite(self.N)
        if not finite.any():
            return None
        N = np.where(finite, self.N, np.inf)
        return int(self.batch_sizes[int(np.argmin(N))])

    def summary_rows(self):
        for j, b in enumerate(self.batch_sizes):
            yield (int(b), self.K_median[j], self.K_mean[j], self.N[j], int(self.not_reached[j]))

    def write(self, out_dir):
        os.makedirs(out_dir, exist_ok=True)
        _write_csv(
            os.path.join(out_dir, "sweep.csv"),
            SWEEP_FIELDS,
            [(b, s, K, None if K is None else K * b, int(K is not None)) for b, s, K in self.runs],
        )
        _write_csv(os.path.join(out_dir, "summary.csv"), SUMMARY_FIELDS, self.summary_rows())


def read_summary(path) -> SweepResult:
    """Rebuild the aggregate fields of a :class:`SweepResult` from ``summary.csv``."""
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    return SweepResult(
        batch_sizes=np.array([int(r["b"]) for r in rows]),
        K_median=np.array([float(r["K_median"]) for r in rows]),
        K_mean=np.array([float(r["K_mean"]) for r in rows]),
        N=np.array([float(r["N"]) for r in rows]),
        not_reached=np.array([int(r["not_reached"]) for r in rows]),
    )


def _one_run(cfg: SweepConfig, b, seed, obj=None):
    obj = cfg.build_suite() if obj is None else obj
    sampler = BatchSampler(obj.n, b, mode=cfg.sampling, seed=seed)
    theta0 = obj.initial_point(cfg.init_seed)
    if cfg.optimizer == "armijo":
        trace = run_armijo_sgd(obj, sampler, cfg.armijo, theta0, cfg.stop)
    else:
        trace = run_constant_sgd(obj, sampler, cfg.alpha, theta0, cfg.stop)
    return steps_to_threshold(trace, cfg.stop)


def _run_chunk(args):
    cfg, jobs = args
    obj = cfg.build_suite()
    return [(b, s, _one_run(cfg, b, s, obj)) for b, s in jobs]


def run_sweep(cfg: SweepConfig, theory: TheoryConstants | None = None) -> SweepResult:
    """Run every ``(b, seed)`` pair and aggregate steps-to-threshold.

    With ``workers > 1`` runs are spread over processes; results are put
    back in ``(b, seed)`` order so outputs do not depend on scheduling.
    Writes ``sweep.csv`` and ``summary.csv`` when ``output_dir`` is set.
    """
    obj = cfg.build_suite()
    for b in cfg.batch_sizes:
        if not 1 <= b <= obj.n:
            raise ValueError(f"batch size {b} outside [1, n={obj.n}]")
    jobs = [(int(b), int(s)) for b in cfg.batch_sizes for s in cfg.seeds]
    if cfg.workers == 1:
        runs = [(b, s, _one_run(cfg, b, s, obj)) for b, s in jobs]
    else:
        chunks = [(cfg, jobs[i :: cfg.workers]) for i in range(cfg.workers)]
        with ProcessPoolExecutor(max_workers=cfg.workers) as pool:
            done = {(b, s): K for part in pool.map(_run_chunk, chunks) for b, s, K in part}
        runs = [(b, s, done[(b, s)]) for b, s in jobs]

    bs = np.array([int(b) for b in cfg.batch_sizes])
    K_median = np.full(len(bs), np.nan)
    K_mean = np.full(len(bs), np.nan)
    missing = np.zeros(len(bs), dtype=int)
    for j, b in enumerate(bs):
        Ks = [K for bb, _, K in runs if bb == b and K is not None]
        missing[j] = sum(1 for bb, _, K in runs if bb == b and K is None)
        if Ks:
            K_median[j] = float(np.median(Ks))
            K_mean[j] = float(np.mean(Ks))
    result = SweepResult(bs, K_median, K_mean, K_median * bs, missing, runs, theory, cfg.eps)
    if cfg.output_dir:
        result.write(cfg.output_dir)
    return result


# ---------------------------------------------------------------------------
# Plot data
# ---------------------------------------------------------------------------


def emit_plot_data(path, result: SweepResult | None = None, tc=None, eps=None, theory_grid=None):
    """Write ``k_vs_b.csv`` and ``n_vs_b.csv`` into directory ``path``.

    Columns are ``b, K_measured, K_theory`` and ``b, N_measured, N_theory``.
    Measured and theory points share one sorted ``b`` column; a cell is
    empty where a series has no value (no measurement, or ``b`` below the
    feasibility threshold).  Without ``theory_grid`` the theory curve is
    sampled on 64 geometric points spanning the measured batch sizes.
    """
    if result is None and tc is None:
        raise ValueError("nothing to emit")
    if tc is not None and eps is None:
        raise ValueError("theory curves need eps")
    measured = {}
    if result is not None:
        for j, b in enumerate(result.batch_sizes):
            measured[float(b)] = (result.K_median[j], result.N[j])
    grid = set(measured)
    if tc is not None:
        if theory_grid is None:
            if not measured:
                raise ValueError("theory_grid is required without measured points")
            lo, hi = min(measured), max(measured)
            theory_grid = np.geomspace(lo, hi, 64) if hi > lo else [lo]
        grid.update(float(b) for b in theory_grid)
    b_col = sorted(grid)
    threshold = -math.inf if tc is None else tc.C2 / eps**2
    k_rows, n_rows = [], []
    for b in b_col:
        Km, Nm = measured.get(b, (None, None))
        Kt = Nt = None
        if tc is not None and b > threshold:
            Kt, Nt = steps_needed(tc, eps, b), sfo_complexity(tc, eps, b)
        k_rows.append((b, Km, Kt))
        n_rows.append((b, Nm, Nt))
    os.makedirs(path, exist_ok=True)
    _write_csv(os.path.join(path, "k_vs_b.csv"), ("b", "K_measured", "K_theory"), k_rows)
    _write_csv(os.path.join(path, "n_vs_b.csv"), ("b", "N_measured", "N_theory"), n_rows)


def read_plot_data(path):
    """Parse the files of :func:`emit_plot_data`; empty cells become NaN."""
    out = {}
    for name in ("k_vs_b.csv", "n_vs_b.csv"):
        with open(os.path.join(path, name), newline="") as fh:
            reader = csv.reader(fh)
            header = next(reader)
            cols = list(zip(*[[float(v) if v else math.nan for v in row] for row in reader]))
        out[name[0].upper()] = {h: np.array(c) for h, c in zip(header, cols)}
    return out


# ---------------------------------------------------------------------------
# Theory constants from a concrete problem
# ---------------------------------------------------------------------------


def estimated_lower_bound(traces) -> float:
    """Smallest objective value seen across ``traces``.

    Used in place of an unknown ``f_*``.  Since the bound grows with
    ``f0 - f_*``, using the best observed value (which is ``>= f_*``) gives
    constants that are flagged as estimated.
    """
    values = [v for t in traces for v in t.f_value]
    if not values:
        raise ValueError("no recorded objective values")
    return float(min(values))


def theory_constants_for(
    obj: FiniteSumObjective,
    theta0,
    sigma_sq,
    cfg: ArmijoConfig | None = None,
    alpha=None,
    f_star=None,
    lipschitz=None,
) -> TheoryConstants:
    """Constants of the bound that applies to ``obj`` started at ``theta0``.

    Pass ``cfg`` for Armijo (case (i) if ``alpha_max <= 1/L_n``, case (ii)
    otherwise) or ``alpha`` for a constant step.  ``lipschitz`` overrides the
    declared constants (e.g. an estimated summary); ``f_star`` overrides
    ``obj.lower_bound``.
    """
    if (cfg is None) == (alpha is None):
        raise ValueError("pass exactly one of cfg or alpha")
    flags = []
    if lipschitz is None:
        lipschitz = lipschitz_summary(obj)
    if lipschitz.source != "analytic":
        flags.append("optimistic")
    if f_star is None:
        f_star = obj.lower_bound
        if f_star is None:
            raise ValueError("f_star unknown; pass an estimate (see estimated_lower_bound)")
    else:
        flags.append("estimated-f_star")
    f0 = full_value(obj, theta0)
    L_n, L_max = lipschitz.L_n, lipschitz.L_max
    if alpha is not None:
        tc = constants_constant_lr(f0, f_star, L_n, alpha, sigma_sq)
    elif cfg.alpha_max <= 1.0 / L_n:
        tc = constants_armijo_case1(f0, f_star, L_n, L_max, cfg.alpha_max, cfg.delta, cfg.c, sigma_sq)
    else:
        tc = constants_armijo_case2(f0, f_star, L_n, cfg.alpha_max, cfg.delta, cfg.c, sigma_sq)
    return tc.with_flags(*flags) if flags else tc


@dataclass(frozen=True)
class BoundRow:
    b: int
    K: int
    lhs: float
    rhs: float

    @property
    def holds(self) -> bool:
        return self.lhs <= self.rhs


@dataclass
class BoundReport:
    """Seed-averaged ``min_{k<K} |grad f(theta_k)|^2`` against ``C1/K + C2/b``."""

    tc: TheoryConstants
    rows: list
    seeds: int

    @property
    def ok(self) -> bool:
        return all(r.holds for r in self.rows)

    def lines(self):
        out = [f"regime={self.tc.regime} C1={self.tc.C1!r} C2={self.tc.C2!r} seeds={self.seeds}"]
        for r in self.rows:
            out.append(
                f"b={r.b} K={r.K} mean_min_gnorm2={r.lhs!r} bound={r.rhs!r} "
                f"{'holds' if r.holds else 'VIOLATED'}"
            )
        return out


def validate_bound(
    obj,
    tc: TheoryConstants,
    K_values,
    batch_sizes,
    seeds,
    theta0,
    cfg: ArmijoConfig | None = None,
    alpha=None,
    sampling="with_replacement",
    min_seeds=20,
) -> BoundReport:
    """Average ``min_grad_norm_sq`` over seeds and compare with the bound.

    One run of ``max(K_values)`` steps per ``(b, seed)`` serves every ``K``.
    Deterministic problems (``n == 1``) may use fewer seeds.
    """
    seeds = list(seeds)
    if (cfg is None) == (alpha is None):
        raise ValueError("pass exactly one of cfg or alpha")
    if obj.n > 1 and len(seeds) < min_seeds:
        raise ValueError(f"need at least {min_seeds} seeds, got {len(seeds)}")
    K_values = sorted(int(K) for K in K_values)
    stop = StopRule.max_steps(K_values[-1])
    rows = []
    for b in batch_sizes:
        mins = np.zeros((len(seeds), len(K_values)))
        for j, s in enumerate(seeds):
            sampler = BatchSampler(obj.n, b, mode=sampling, seed=s)
            if cfg is not None:
                trace = run_armijo_sgd(obj, sampler, cfg, theta0, stop)
            else:
                trace = run_constant_sgd(obj, sampler, alpha, theta0, stop)
            if trace.error:
                raise FloatingPointError(f"run b={b} seed={s} aborted: {trace.error}")
            mins[j] = [min_grad_norm_sq(trace, K) for K in K_values]
        avg = mins.mean(axis=0)
        rows.extend(BoundRow(int(b), K, float(avg[i]), bound_rhs(tc, K, b)) for i, K in enumerate(K_values))
    return BoundReport(tc, rows, len(seeds))


# ---------------------------------------------------------------------------
# Critical-batch estimation from two measurements
# ---------------------------------------------------------------------------


@dataclass
class PipelineReport:
    X: float
    L_n: float
    pairs: tuple
    c_predict: float
    b_star_predicted: float
    b_star_measured: float | None

    @property
    def ratio(self):
        if self.b_star_measured is None:
            return None
        return self.b_star_predicted / self.b_star_measured

    @property
    def nearest_power_of_two(self) -> int:
        return int(2 ** round(math.log2(self.b_star_predicted)))

    def as_dict(self):
        return {
            "X": self.X,
            "L_n": self.L_n,
            "pairs": [list(p) for p in self.pairs],
            "c_predict": self.c_predict,
            "b_star_predicted": self.b_star_predicted,
            "nearest_power_of_two": self.nearest_power_of_two,
            "b_star_measured": self.b_star_measured,
            "ratio": self.ratio,
        }


def pipeline_from_pairs(pair1, pair2, delta, alpha_max, c_predict, b_star_measured=None) -> PipelineReport:
    """Fit ``X``, ``L_n`` to two ``(c, b*)`` pairs and predict ``b*`` at ``c_predict``."""
    est = estimate_X_Ln(pair1, pair2, delta, alpha_max)
    return PipelineReport(est.X, est.L_n, est.pairs, c_predict, est.predict(c_predict), b_star_measured)


def estimate_critical_pipeline(cfg: SweepConfig, c_calibrate, c_predict) -> PipelineReport:
    """Measure ``b*`` at two ``c`` values, fit, predict at a third, then measure it.

    Every sweep shares the suite, seeds, ``delta`` and ``alpha_max`` of ``cfg``;
    only ``c`` changes.
    """
    cs = list(c_calibrate) + [c_predict]
    if len(set(cs)) != 3:
        raise ValueError("need two calibration c values and a distinct prediction c")
    if cfg.optimizer != "armijo":
        raise ValueError("the pipeline varies the Armijo constant c")
    measured = []
    for c in cs:
        sub = replace(cfg, armijo=replace(cfg.armijo, c=c), output_dir=None)
        b_star = run_sweep(sub).b_star_measured
        if b_star is None:
            raise ValueError(f"threshold never reached at c={c}")
        measured.append(b_star)
    return pipeline_from_pairs(
        (cs[0], measured[0]),
        (cs[1], measured[1]),
        cfg.armijo.delta,
        cfg.armijo.alpha_max,
        c_predict,
        b_star_measured=measured[2],
    )


def critical_batch_overlay(result: SweepResult):
    """Theory ``b*`` for a result carrying constants, else None."""
    if result.theory is None or result.eps is None:
        return None
    return critical_batch(result.theory, result.eps)
