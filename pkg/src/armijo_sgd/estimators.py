"""Data-driven estimates of the gradient-noise level and Lipschitz constants."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .linesearch import ArmijoConfig
from .objectives import FiniteSumObjective, LipschitzSummary

__all__ = [
    "LipschitzEstimate",
    "NoiseEstimate",
    "batch_gradient_variance",
    "default_probe_points",
    "estimate_lipschitz",
    "estimate_sigma_sq",
    "single_sample_variance",
]

AGGREGATIONS = ("max", "mean")


@dataclass(frozen=True)
class NoiseEstimate:
    """Variance bound ``sigma^2`` of the single-sample stochastic gradient.

    ``per_point`` holds the exact variance at each probe; ``sigma_sq`` is
    their max or mean.  Every component is evaluated at every probe, so
    ``samples_per_point`` equals ``n``.
    """

    sigma_sq: float
    probe_points: int
    samples_per_point: int
    aggregation: str
    per_point: tuple

    def as_dict(self):
        return {
            "sigma_sq": self.sigma_sq,
            "probe_points": self.probe_points,
            "samples_per_point": self.samples_per_point,
            "aggregation": self.aggregation,
            "per_point": list(self.per_point),
        }


def single_sample_variance(obj: FiniteSumObjective, theta) -> float:
    """``(1/n) sum_i |grad f_i(theta) - grad f(theta)|^2``."""
    G = obj.component_gradients(obj.all_indices, obj.check_theta(theta))
    dev = G - G.mean(axis=0)
    return float(np.mean(np.einsum("ij,ij->i", dev, dev)))


def estimate_sigma_sq(obj: FiniteSumObjective, theta_points, aggregation="max") -> NoiseEstimate:
    """Exact single-sample gradient variance at each probe, aggregated.

    Under uniform sampling of one index the variance is the population
    variance of the component gradients, which a finite sum gives exactly.
    ``max`` is the default because ``sigma^2`` is meant as a uniform bound.
    """
    if aggregation not in AGGREGATIONS:
        raise ValueError(f"aggregation must be one of {AGGREGATIONS}, got {aggregation!r}")
    points = list(theta_points)
    if not points:
        raise ValueError("need at least one probe point")
    per_point = tuple(single_sample_variance(obj, t) for t in points)
    agg = max(per_point) if aggregation == "max" else float(np.mean(per_point))
    return NoiseEstimate(float(agg), len(points), obj.n, aggregation, per_point)


def default_probe_points(obj, theta0, cfg: ArmijoConfig, b, seed=0, n_checkpoints=4, pilot_steps=200):
    """``theta0`` plus ``n_checkpoints`` iterates spread evenly over a pilot run."""
    # local import keeps estimators usable without the optimizer loop
    from .optimizer import BatchSampler, StopRule, run_armijo_sgd

    theta0 = obj.check_theta(theta0)
    trace = run_armijo_sgd(
        obj,
        BatchSampler(obj.n, b, seed=seed),
        cfg,
        theta0,
        StopRule.max_steps(pilot_steps),
        record_iterates=True,
    )
    path = trace.iterates[1:] + [trace.theta]
    if not path or n_checkpoints < 1:
        return [theta0.copy()]
    picks = np.linspace(0, len(path) - 1, n_checkpoints).round().astype(int)
    return [theta0.copy()] + [path[k].copy() for k in picks]


def batch_gradient_variance(obj, theta, b, n_batches=100_000, seed=0, chunk=10_000) -> float:
    """Monte-Carlo estimate of ``E |grad f_B(theta) - grad f(theta)|^2``.

    Batches of size ``b`` are drawn with replacement.
    """
    theta = obj.check_theta(theta)
    G = obj.component_gradients(obj.all_indices, theta)
    mean = G.mean(axis=0)
    rng = np.random.default_rng(seed)
    total = 0.0
    done = 0
    while done < n_batches:
        m = min(chunk, n_batches - done)
        idx = rng.integers(0, obj.n, size=(m, b))
        dev = G[idx].mean(axis=1) - mean
        total += float(np.einsum("ij,ij->", dev, dev))
        done += m
    return total / n_batches


@dataclass(frozen=True)
class LipschitzEstimate:
    """Secant-ratio estimates of the component Lipschitz constants.

    Secant ratios never exceed the true constant, so every value here is a
    lower bound; theory constants built from it are optimistic.
    """

    L_i: np.ndarray
    probes: int
    radius: float
    seed: int
    is_lower_bound: bool = True

    @property
    def L_max(self) -> float:
        return float(np.max(self.L_i))

    @property
    def L_n(self) -> float:
        return float(np.mean(self.L_i))

    def summary(self) -> LipschitzSummary:
        return LipschitzSummary(self.L_n, self.L_max, source="estimated")

    def as_dict(self):
        return {
            "L_n": self.L_n,
            "L_max": self.L_max,
            "probes": self.probes,
            "radius": self.radius,
            "seed": self.seed,
            "is_lower_bound": self.is_lower_bound,
        }


def _ball_point(rng, center, radius):
    d = rng.normal(size=center.shape)
    d /= np.linalg.norm(d)
    return center + radius * rng.uniform() ** (1.0 / center.size) * d


def estimate_lipschitz(obj, probes=100, radius=1.0, seed=0, center=None) -> LipschitzEstimate:
    """Max secant ratio ``|grad f_i(x) - grad f_i(y)| / |x - y|`` per component.

    Pairs ``(x, y)`` are drawn uniformly from the ball of ``radius`` around
    ``center`` (the origin by default) from one sequential stream, so more
    probes only add pairs and the estimate is nondecreasing in ``probes``.
    Coincident pairs are redrawn.
    """
    if probes < 2:
        raise ValueError("need at least 2 probes")
    if not radius > 0:
        raise ValueError("radius must be positive")
    center = np.zeros(obj.dim) if center is None else obj.check_theta(center)
    rng = np.random.default_rng(seed)
    idx = obj.all_indices
    L = np.zeros(obj.n)
    for _ in range(probes):
        while True:
            x = _ball_point(rng, center, radius)
            y = _ball_point(rng, center, radius)
            gap = np.linalg.norm(x - y)
            if gap > 1e-8 * radius:
                break
        diff = obj.component_gradients(idx, x) - obj.component_gradients(idx, y)
        np.maximum(L, np.linalg.norm(diff, axis=1) / gap, out=L)
    return LipschitzEstimate(L, probes, float(radius), int(seed))
