"""Batch Armijo test and backtracking step-size search."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

__all__ = [
    "ArmijoConfig",
    "CounterexampleReport",
    "LineSearchOutcome",
    "OracleBlowupError",
    "StationaryBatchError",
    "armijo_holds",
    "backtrack",
    "init_step",
    "verify_counterexample",
]

# Slack on the acceptance inequality, in units of machine epsilon times the
# magnitude of the compared quantities.  Without it, steps lying exactly on the
# acceptance boundary are rejected by rounding alone.
ROUNDING_SLACK = 8.0


class OracleBlowupError(FloatingPointError):
    """An objective or gradient evaluation returned a non-finite value."""


class StationaryBatchError(ValueError):
    """The batch gradient is zero, so there is no descent direction."""


@dataclass(frozen=True)
class ArmijoConfig:
    """Hyperparameters of the backtracking search.

    Parameters
    ----------
    c : float
        Sufficient-decrease constant in (0, 1).
    delta : float
        Shrink factor in (0, 1).
    gamma : float
        Growth factor (> 1) used by the step reset ``gamma**(b/n) * alpha_prev``.
    alpha_max : float
        Upper bound on every step size.
    max_backtracks : int
        Guard on the number of shrinks per search.
    alpha_floor : float
        Step returned (and flagged) when the guard trips.
    test_initial_step : bool
        If True (default) the initial trial step is tested before the first
        shrink.  If False, the first trial step is ``delta * alpha_init``.
    """

    c: float = 0.1
    delta: float = 0.9
    gamma: float = 2.0
    alpha_max: float = 10.0
    max_backtracks: int = 200
    alpha_floor: float = 1e-12
    test_initial_step: bool = True

    def __post_init__(self):
        if not 0 < self.c < 1:
            raise ValueError(f"c must lie in (0, 1), got {self.c}")
        if not 0 < self.delta < 1:
            raise ValueError(f"delta must lie in (0, 1), got {self.delta}")
        if not self.gamma > 1:
            raise ValueError(f"gamma must exceed 1, got {self.gamma}")
        if not self.alpha_max > 0:
            raise ValueError(f"alpha_max must be positive, got {self.alpha_max}")
        if self.max_backtracks < 1:
            raise ValueError("max_backtracks must be a positive integer")
        if not 0 < self.alpha_floor < self.alpha_max:
            raise ValueError("alpha_floor must lie in (0, alpha_max)")

    def step_lower_bound(self, L) -> float:
        """``2 delta (1 - c) / L``, the guaranteed floor of accepted steps."""
        return 2.0 * self.delta * (1.0 - self.c) / L

    def check_floor(self, L_max):
        """Raise if the safety floor could mask the guaranteed lower bound."""
        if self.alpha_floor >= self.step_lower_bound(L_max):
            raise ValueError(
                f"alpha_floor={self.alpha_floor} is not below 2*delta*(1-c)/L_max="
                f"{self.step_lower_bound(L_max)}"
            )


@dataclass(frozen=True)
class LineSearchOutcome:
    alpha: float
    backtracks: int
    armijo_satisfied: bool
    floored: bool
    value: float | None = None


def _finite(x, what):
    if not np.all(np.isfinite(x)):
        raise OracleBlowupError(f"non-finite {what}")
    return x


def _accepts(f_trial, f_theta, decrease):
    slack = ROUNDING_SLACK * np.finfo(float).eps * (abs(f_theta) + abs(f_trial) + decrease)
    return f_trial <= f_theta - decrease + slack


def armijo_holds(batch_value, theta, g, alpha, c, f_theta=None) -> bool:
    """Whether ``batch_value(theta - alpha g) <= batch_value(theta) - c alpha |g|^2``.

    Differences at the level of floating-point rounding count as equality.
    """
    if not alpha > 0:
        raise ValueError(f"alpha must be positive, got {alpha}")
    if f_theta is None:
        f_theta = batch_value(theta)
    _finite(f_theta, "objective value")
    f_trial = _finite(batch_value(theta - alpha * g), "objective value")
    decrease = c * alpha * float(np.dot(g, g))
    return bool(_accepts(f_trial, f_theta, decrease))


def init_step(alpha_prev, cfg: ArmijoConfig, b, n) -> float:
    """Reset rule ``min(gamma**(b/n) * alpha_prev, alpha_max)``."""
    if not alpha_prev > 0:
        raise ValueError(f"alpha_prev must be positive, got {alpha_prev}")
    return min(cfg.gamma ** (b / n) * alpha_prev, cfg.alpha_max)


def backtrack(batch_value, theta, g, cfg: ArmijoConfig, alpha_init, f_theta=None):
    """Shrink ``alpha_init`` by ``delta`` until the Armijo condition holds.

    ``backtracks`` counts shrinks.  When the guard trips, ``cfg.alpha_floor``
    is returned with ``floored=True`` and the Armijo test evaluated there.

    Raises
    ------
    StationaryBatchError
        If ``g`` is the zero vector.
    OracleBlowupError
        If any evaluation is non-finite.
    """
    if not alpha_init > 0:
        raise ValueError(f"alpha_init must be positive, got {alpha_init}")
    g = _finite(np.asarray(g, dtype=float), "gradient")
    gg = float(np.dot(g, g))
    if gg == 0.0:
        raise StationaryBatchError("stationary batch: zero gradient gives no descent direction")
    if f_theta is None:
        f_theta = batch_value(theta)
    _finite(f_theta, "objective value")

    alpha = alpha_init
    backtracks = 0
    if not cfg.test_initial_step:
        alpha *= cfg.delta
        backtracks = 1
    while alpha >= cfg.alpha_floor:
        f_trial = _finite(batch_value(theta - alpha * g), "objective value")
        if _accepts(f_trial, f_theta, cfg.c * alpha * gg):
            return LineSearchOutcome(alpha, backtracks, True, False, float(f_trial))
        if backtracks >= cfg.max_backtracks:
            break
        alpha *= cfg.delta
        backtracks += 1

    alpha = cfg.alpha_floor
    f_trial = _finite(batch_value(theta - alpha * g), "objective value")
    ok = bool(_accepts(f_trial, f_theta, cfg.c * alpha * gg))
    return LineSearchOutcome(alpha, backtracks, ok, True, float(f_trial))


@dataclass(frozen=True)
class CounterexampleReport:
    """Both sides of the two inequalities at a candidate step on ``f(x) = x^2``."""

    alpha: float
    theta: float
    c: float
    alpha_max: float
    lipschitz: float
    armijo_lhs: float
    armijo_rhs: float
    armijo_holds: bool
    claimed_bound: float
    below_claimed_bound: bool

    @property
    def admissible(self) -> bool:
        return self.armijo_holds and 0 < self.alpha <= self.alpha_max

    @property
    def is_counterexample(self) -> bool:
        return self.admissible and self.below_claimed_bound

    def lines(self):
        return [
            f"f(x) = x^2, x = {self.theta:g}, c = {self.c:g}, alpha_max = {self.alpha_max:g}, "
            f"L = {self.lipschitz:g}, alpha = {self.alpha:g}",
            f"Armijo: f(x - alpha*f'(x)) = {self.armijo_lhs!r} <= "
            f"f(x) - c*alpha*|f'(x)|^2 = {self.armijo_rhs!r} : {self.armijo_holds}",
            f"claimed bound: min(2(1-c)/L, alpha_max) = {self.claimed_bound!r} > "
            f"alpha = {self.alpha!r} : {self.below_claimed_bound}",
            f"counterexample: {self.is_counterexample}",
        ]


def verify_counterexample(alpha=0.5, theta=1.0, c=0.1, alpha_max=1.0) -> CounterexampleReport:
    """Check whether ``alpha`` refutes ``min(2(1-c)/L, alpha_max) <= alpha`` on ``x^2``.

    A step refutes the claimed bound when it satisfies the Armijo condition
    yet lies strictly below the bound.
    """
    # local import: objectives does not depend on this module
    from .objectives import make_counterexample

    obj = make_counterexample()
    x = np.array([theta])
    idx = obj.all_indices
    g = obj.batch_gradient(idx, x)
    lhs = obj.batch_value(idx, x - alpha * g)
    rhs = obj.batch_value(idx, x) - c * alpha * float(g @ g)
    L = float(obj.lipschitz[0])
    bound = min(2.0 * (1.0 - c) / L, alpha_max)
    holds = armijo_holds(lambda t: obj.batch_value(idx, t), x, g, alpha, c)
    return CounterexampleReport(
        alpha=alpha,
        theta=theta,
        c=c,
        alpha_max=alpha_max,
        lipschitz=L,
        armijo_lhs=float(lhs),
        armijo_rhs=float(rhs),
        armijo_holds=holds,
        claimed_bound=bound,
        below_claimed_bound=bool(math.isfinite(bound) and bound > alpha),
    )
