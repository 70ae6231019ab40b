"""Mini-batch SGD with Armijo backtracking or a constant step size."""

from __future__ import annotations

import csv
import json
import warnings
from dataclasses import dataclass, field

import numpy as np

from .linesearch import (
    ArmijoConfig,
    OracleBlowupError,
    StationaryBatchError,
    backtrack,
    init_step,
)
from .objectives import FiniteSumObjective

__all__ = [
    "BatchSampler",
    "RunTrace",
    "StopRule",
    "TRACE_FIELDS",
    "min_grad_norm_sq",
    "run_armijo_sgd",
    "run_constant_sgd",
    "steps_to_threshold",
]

SAMPLING_MODES = ("with_replacement", "shuffled_epochs")
TRACE_FIELDS = ("step", "alpha", "batch_gnorm2", "full_gnorm2", "f", "sfo", "acc", "backtracks", "floored")


class BatchSampler:
    """Draws index batches of size ``b`` from ``range(n)``.

    ``with_replacement`` draws ``b`` i.i.d. uniform indices per batch.
    ``shuffled_epochs`` walks through a fresh permutation each epoch in
    chunks of ``b``, dropping a trailing partial chunk.  Batches are returned
    sorted so evaluation order does not depend on draw order.
    """

    def __init__(self, n, b, mode="with_replacement", seed=0):
        if not 1 <= b <= n:
            raise ValueError(f"batch size must satisfy 1 <= b <= n, got b={b}, n={n}")
        if mode not in SAMPLING_MODES:
            raise ValueError(f"unknown sampling mode {mode!r}")
        self.n = int(n)
        self.b = int(b)
        self.mode = mode
        self.seed = int(seed)
        self._rng = np.random.default_rng(self.seed)
        self._perm = None
        self._pos = 0

    def draw(self) -> np.ndarray:
        if self.mode == "with_replacement":
            idx = self._rng.integers(0, self.n, size=self.b)
        else:
            if self._perm is None or self._pos + self.b > self.n:
                self._perm = self._rng.permutation(self.n)
                self._pos = 0
            idx = self._perm[self._pos : self._pos + self.b]
            self._pos += self.b
        return np.sort(idx)


@dataclass(frozen=True)
class StopRule:
    """When a run ends.

    ``kind`` is ``max_steps`` (run exactly ``value`` steps),
    ``grad_norm_below`` (stop once ``|grad f|^2 <= value``) or
    ``accuracy_at_least`` (stop once training accuracy ``>= value``).  ``cap``
    bounds the number of steps for the threshold kinds.
    """

    kind: str
    value: float
    cap: int = 100_000

    def __post_init__(self):
        if self.kind not in ("max_steps", "grad_norm_below", "accuracy_at_least"):
            raise ValueError(f"unknown stop rule {self.kind!r}")
        if self.cap < 1:
            raise ValueError("cap must be at least 1")
        if self.kind == "max_steps" and (self.value < 0 or int(self.value) != self.value):
            raise ValueError("max_steps needs a nonnegative integer step count")

    @classmethod
    def max_steps(cls, steps):
        return cls("max_steps", int(steps), cap=max(1, int(steps)))

    @classmethod
    def grad_norm_below(cls, eps_sq, cap=100_000):
        return cls("grad_norm_below", float(eps_sq), cap)

    @classmethod
    def accuracy_at_least(cls, tau, cap=100_000):
        return cls("accuracy_at_least", float(tau), cap)

    @property
    def step_limit(self) -> int:
        return int(self.value) if self.kind == "max_steps" else self.cap

    def reached(self, full_gnorm2, accuracy) -> bool:
        if self.kind == "grad_norm_below":
            return full_gnorm2 <= self.value
        if self.kind == "accuracy_at_least":
            return accuracy is not None and accuracy >= self.value
        return False


@dataclass
class RunTrace:
    """Per-step record of one SGD run.

    Entry ``k`` describes the iterate ``theta_k`` (objective value, full
    gradient, accuracy) together with the step taken from it.  ``sfo[k]``
    is ``b * (k + 1)``: line-search and reporting evaluations are excluded.
    """

    batch_size: int
    alpha: list = field(default_factory=list)
    batch_grad_norm_sq: list = field(default_factory=list)
    full_grad_norm_sq: list = field(default_factory=list)
    f_value: list = field(default_factory=list)
    sfo: list = field(default_factory=list)
    accuracy: list = field(default_factory=list)
    backtracks: list = field(default_factory=list)
    floored: list = field(default_factory=list)
    theta: np.ndarray | None = None
    error: str | None = None
    iterates: list | None = None

    def __len__(self):
        return len(self.alpha)

    def append(self, alpha, batch_gnorm2, full_gnorm2, f, acc, backtracks, floored):
        self.alpha.append(float(alpha))
        self.batch_grad_norm_sq.append(float(batch_gnorm2))
        self.full_grad_norm_sq.append(float(full_gnorm2))
        self.f_value.append(float(f))
        self.sfo.append(self.batch_size * (len(self.sfo) + 1))
        self.accuracy.append(float("nan") if acc is None else float(acc))
        self.backtracks.append(int(backtracks))
        self.floored.append(bool(floored))

    def rows(self):
        for k in range(len(self)):
            yield {
                "step": k,
                "alpha": self.alpha[k],
                "batch_gnorm2": self.batch_grad_norm_sq[k],
                "full_gnorm2": self.full_grad_norm_sq[k],
                "f": self.f_value[k],
                "sfo": self.sfo[k],
                "acc": self.accuracy[k],
                "backtracks": self.backtracks[k],
                "floored": int(self.floored[k]),
            }

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(TRACE_FIELDS)
            for row in self.rows():
                writer.writerow(
                    [
                        v if isinstance(v, int) else format(v, ".17g")
                        for v in (row[name] for name in TRACE_FIELDS)
                    ]
                )

    def to_json(self, path):
        payload = {
            "batch_size": self.batch_size,
            "steps": list(self.rows()),
            "theta": None if self.theta is None else self.theta.tolist(),
            "error": self.error,
        }
        with open(path, "w") as fh:
            # NaN accuracies are emitted as JSON null
            json.dump(_nan_to_none(payload), fh, indent=1)

    @classmethod
    def from_csv(cls, path, batch_size=None):
        with open(path, newline="") as fh:
            rows = list(csv.DictReader(fh))
        if batch_size is None:
            batch_size = int(rows[0]["sfo"]) if rows else 0
        return cls._from_rows(batch_size, rows)

    @classmethod
    def from_json(cls, path):
        with open(path) as fh:
            payload = json.load(fh)
        trace = cls._from_rows(payload["batch_size"], payload["steps"])
        if payload.get("theta") is not None:
            trace.theta = np.array(payload["theta"], dtype=float)
        trace.error = payload.get("error")
        return trace

    @classmethod
    def _from_rows(cls, batch_size, rows):
        trace = cls(batch_size=int(batch_size))
        for row in rows:
            acc = row["acc"]
            trace.alpha.append(float(row["alpha"]))
            trace.batch_grad_norm_sq.append(float(row["batch_gnorm2"]))
            trace.full_grad_norm_sq.append(float(row["full_gnorm2"]))
            trace.f_value.append(float(row["f"]))
            trace.sfo.append(int(row["sfo"]))
            trace.accuracy.append(float("nan") if acc is None else float(acc))
            trace.backtracks.append(int(row["backtracks"]))
            trace.floored.append(bool(int(row["floored"])))
        return trace


def _nan_to_none(obj):
    if isinstance(obj, float) and obj != obj:
        return None
    if isinstance(obj, dict):
        return {k: _nan_to_none(v) for k, v in obj.items()}
    if isinstance(obj, list):
        return [_nan_to_none(v) for v in obj]
    return obj


def _run(obj: FiniteSumObjective, sampler, theta0, stop: StopRule, step, record_iterates):
    theta = obj.check_theta(theta0).copy()
    trace = RunTrace(batch_size=sampler.b)
    if record_iterates:
        trace.iterates = []
    all_idx = obj.all_indices
    for _ in range(stop.step_limit):
        idx = sampler.draw()
        try:
            f_full, g_full = obj.value_and_gradient(all_idx, theta)
            f_batch, g = obj.value_and_gradient(idx, theta)
            if not (np.isfinite(f_full) and np.all(np.isfinite(g_full)) and np.all(np.isfinite(g))):
                raise OracleBlowupError("non-finite objective or gradient")
            acc = obj.accuracy(theta)
            alpha, backtracks, floored, theta_next = step(idx, theta, f_batch, g)
        except OracleBlowupError as exc:
            trace.error = str(exc)
            break
        full_gnorm2 = float(g_full @ g_full)
        if record_iterates:
            trace.iterates.append(theta.copy())
        trace.append(alpha, float(g @ g), full_gnorm2, f_full, acc, backtracks, floored)
        theta = theta_next
        if stop.reached(full_gnorm2, acc):
            break
    trace.theta = theta
    return trace


def run_armijo_sgd(
    obj: FiniteSumObjective,
    sampler: BatchSampler,
    cfg: ArmijoConfig,
    theta0,
    stop: StopRule,
    record_iterates=False,
) -> RunTrace:
    """SGD whose step size comes from backtracking on the sampled batch.

    The batch that defines the line-search objective is the one whose
    gradient is used for the update.  A zero batch gradient skips the update
    and repeats the previous step size.
    """
    if obj.lipschitz is not None:
        cfg.check_floor(float(np.max(obj.lipschitz)))
    state = {"alpha_prev": cfg.alpha_max}

    def step(idx, theta, f_batch, g):
        def batch_value(t):
            return obj.batch_value(idx, t)

        alpha_init = init_step(state["alpha_prev"], cfg, sampler.b, obj.n)
        try:
            out = backtrack(batch_value, theta, g, cfg, alpha_init, f_theta=f_batch)
        except StationaryBatchError:
            return state["alpha_prev"], 0, False, theta
        state["alpha_prev"] = out.alpha
        return out.alpha, out.backtracks, out.floored, theta - out.alpha * g

    return _run(obj, sampler, theta0, stop, step, record_iterates)


def run_constant_sgd(obj, sampler, alpha, theta0, stop, record_iterates=False) -> RunTrace:
    """SGD with a fixed step size ``alpha``.

    Warns when ``alpha`` lies outside ``(0, 2/L_n)`` for a suite with declared
    Lipschitz constants.
    """
    if not alpha > 0:
        raise ValueError(f"alpha must be positive, got {alpha}")
    if obj.lipschitz is not None:
        L_n = float(np.mean(obj.lipschitz))
        if alpha >= 2.0 / L_n:
            warnings.warn(f"alpha={alpha} is outside (0, 2/L_n) = (0, {2.0 / L_n})", stacklevel=2)

    def step(idx, theta, f_batch, g):
        return alpha, 0, False, theta - alpha * g

    return _run(obj, sampler, theta0, stop, step, record_iterates)


def steps_to_threshold(trace: RunTrace, stop: StopRule):
    """1-based number of iterates until the stop predicate first holds, else None."""
    if stop.kind == "grad_norm_below":
        values = np.asarray(trace.full_grad_norm_sq)
        hits = np.flatnonzero(values <= stop.value)
    elif stop.kind == "accuracy_at_least":
        values = np.asarray(trace.accuracy, dtype=float)
        if len(values) and np.all(np.isnan(values)):
            raise ValueError("trace has no accuracy record")
        hits = np.flatnonzero(values >= stop.value)
    else:
        raise ValueError("steps_to_threshold needs a threshold stop rule")
    return int(hits[0]) + 1 if len(hits) else None


def min_grad_norm_sq(trace: RunTrace, K) -> float:
    """``min_{k < K} |grad f(theta_k)|^2`` over the recorded iterates."""
    if not 1 <= K <= len(trace):
        raise ValueError(f"K={K} outside [1, {len(trace)}]")
    return float(np.min(trace.full_grad_norm_sq[:K]))
