"""Closed-form bounds, steps-needed K(b), SFO complexity N(b) and critical batch size.

All bounds share the form ``min_k E|grad f(theta_k)|^2 <= C1/K + C2/b``.
Setting the right-hand side to ``eps^2`` gives

    K(b) = C1 b / (eps^2 b - C2),     N(b) = K(b) b = C1 b^2 / (eps^2 b - C2),

defined for ``b > C2/eps^2``; ``N`` is minimized at ``b* = 2 C2 / eps^2``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

__all__ = [
    "ConstantsComparison",
    "CriticalBatchEstimate",
    "InfeasibleBatchError",
    "ShapeReport",
    "TheoryConstants",
    "TheoryWindowError",
    "bound_rhs",
    "compare_constant_vs_armijo",
    "constants_armijo_case1",
    "constants_armijo_case2",
    "constants_constant_lr",
    "critical_batch",
    "critical_batch_from_hyperparameters",
    "dK_db",
    "d2K_db2",
    "dN_db",
    "d2N_db2",
    "estimate_X_Ln",
    "kb_shape_report",
    "sfo_complexity",
    "steps_needed",
]

REGIMES = ("armijo_case1", "armijo_case2", "constant_lr", "given")


class TheoryWindowError(ValueError):
    """Parameters fall outside the window where a bound is valid."""


class InfeasibleBatchError(ValueError):
    """``b <= C2/eps^2``: the precision is unreachable at this batch size."""


@dataclass(frozen=True)
class TheoryConstants:
    """``C1``, ``C2`` of one bound plus the inputs they were computed from.

    ``denominator`` is the quantity with ``C1 = 2 (f0 - f_*) / denominator``.
    ``flags`` carries provenance notes such as ``"estimated-f_star"``.
    """

    regime: str
    C1: float
    C2: float
    inputs: dict = field(default_factory=dict)
    denominator: float = math.nan
    alpha_tilde: float = math.nan
    alpha_hat: float = math.nan
    alpha_lower: float = math.nan
    flags: tuple = ()

    def __post_init__(self):
        if self.regime not in REGIMES:
            raise ValueError(f"unknown regime {self.regime!r}")
        if not self.C1 > 0:
            raise TheoryWindowError(f"C1 must be positive, got {self.C1}")
        if not self.C2 >= 0:
            raise TheoryWindowError(f"C2 must be nonnegative, got {self.C2}")

    @classmethod
    def given(cls, C1, C2):
        """Constants supplied directly rather than derived."""
        return cls("given", float(C1), float(C2))

    @property
    def in_step_window(self) -> bool:
        """For case (ii): whether ``alpha_tilde < alpha_max < alpha_hat``."""
        if self.regime != "armijo_case2":
            return False
        return self.alpha_tilde < self.inputs["alpha_max"] < self.alpha_hat

    def with_flags(self, *flags):
        return TheoryConstants(
            self.regime,
            self.C1,
            self.C2,
            dict(self.inputs),
            self.denominator,
            self.alpha_tilde,
            self.alpha_hat,
            self.alpha_lower,
            tuple(self.flags) + tuple(flags),
        )


def _check_gap(f0, f_star):
    if not f0 >= f_star:
        raise TheoryWindowError(f"need f0 >= f_star, got f0={f0}, f_star={f_star}")


def _check_positive(**kwargs):
    for name, value in kwargs.items():
        if not value > 0:
            raise TheoryWindowError(f"{name} must be positive, got {value}")


def constants_armijo_case2(f0, f_star, L_n, alpha_max, delta, c, sigma_sq) -> TheoryConstants:
    """Armijo bound for ``alpha_max > 1/L_n`` with uniform batch sampling.

    ``alpha_tilde = 2 delta (1-c) / L_n`` and, with
    ``D = alpha_tilde - (L_n alpha_max - 1) alpha_max``,
    ``C1 = 2 (f0 - f_*) / D`` and ``C2 = L_n alpha_max^2 sigma^2 / D``.

    ``D > 0`` holds exactly when ``alpha_max < alpha_hat =
    (1 + sqrt(1 + 8 (1-c) delta)) / (2 L_n)``.
    """
    _check_positive(L_n=L_n, alpha_max=alpha_max)
    _check_gap(f0, f_star)
    if not 0.25 < delta < 1:
        raise TheoryWindowError(f"delta must lie in (1/4, 1), got {delta}")
    c_hi = 1.0 - 1.0 / (4.0 * delta)
    if not 0 < c < c_hi:
        raise TheoryWindowError(f"c must lie in (0, 1 - 1/(4 delta)) = (0, {c_hi}), got {c}")
    if not alpha_max > 1.0 / L_n:
        raise TheoryWindowError(
            f"alpha_max={alpha_max} <= 1/L_n={1.0 / L_n}; use the case (i) constants"
        )
    if sigma_sq < 0:
        raise TheoryWindowError("sigma_sq must be nonnegative")
    alpha_tilde = 2.0 * delta * (1.0 - c) / L_n
    alpha_hat = (1.0 + math.sqrt(1.0 + 8.0 * (1.0 - c) * delta)) / (2.0 * L_n)
    denom = alpha_tilde - (L_n * alpha_max - 1.0) * alpha_max
    if not denom > 0:
        raise TheoryWindowError(
            f"alpha_tilde - (L_n alpha_max - 1) alpha_max = {denom} is not positive "
            f"(alpha_max must stay below alpha_hat = {alpha_hat})"
        )
    return TheoryConstants(
        "armijo_case2",
        C1=2.0 * (f0 - f_star) / denom,
        C2=L_n * alpha_max**2 * sigma_sq / denom,
        inputs=dict(
            f0=f0, f_star=f_star, L_n=L_n, alpha_max=alpha_max, delta=delta, c=c, sigma_sq=sigma_sq
        ),
        denominator=denom,
        alpha_tilde=alpha_tilde,
        alpha_hat=alpha_hat,
        alpha_lower=alpha_tilde,
    )


def constants_armijo_case1(f0, f_star, L_n, L_max, alpha_max, delta, c, sigma_sq) -> TheoryConstants:
    """Armijo bound for ``alpha_max <= 1/L_n``.

    With ``alpha_lower = 2 delta (1-c) / L_max`` and
    ``D = (2 - L_n alpha_max) alpha_lower``:
    ``C1 = 2 (f0 - f_*) / D`` and ``C2 = L_n alpha_max^2 sigma^2 / D``.

    ``alpha_lower`` does not depend on ``alpha_max``, so ``C1`` stays finite as
    ``alpha_max -> 0``.  When ``alpha_lower > alpha_max`` the result carries
    the flag ``"alpha_lower_exceeds_alpha_max"``.
    """
    _check_positive(L_n=L_n, L_max=L_max, alpha_max=alpha_max)
    _check_gap(f0, f_star)
    if not (0 < delta < 1 and 0 < c < 1):
        raise TheoryWindowError(f"delta and c must lie in (0, 1), got {delta}, {c}")
    if alpha_max > 1.0 / L_n:
        raise TheoryWindowError(
            f"alpha_max={alpha_max} > 1/L_n={1.0 / L_n}; use the case (ii) constants"
        )
    if sigma_sq < 0:
        raise TheoryWindowError("sigma_sq must be nonnegative")
    alpha_lower = 2.0 * delta * (1.0 - c) / L_max
    denom = (2.0 - L_n * alpha_max) * alpha_lower
    # accepted steps never exceed alpha_max, so alpha_lower > alpha_max cannot be met
    flags = ("alpha_lower_exceeds_alpha_max",) if alpha_lower > alpha_max else ()
    return TheoryConstants(
        "armijo_case1",
        C1=2.0 * (f0 - f_star) / denom,
        C2=L_n * alpha_max**2 * sigma_sq / denom,
        inputs=dict(
            f0=f0,
            f_star=f_star,
            L_n=L_n,
            L_max=L_max,
            alpha_max=alpha_max,
            delta=delta,
            c=c,
            sigma_sq=sigma_sq,
        ),
        denominator=denom,
        alpha_lower=alpha_lower,
        flags=flags,
    )


def constants_constant_lr(f0, f_star, L_n, alpha, sigma_sq) -> TheoryConstants:
    """Constant step ``alpha`` in ``(0, 2/L_n)``.

    ``C1 = 2 (f0 - f_*) / ((2 - L_n alpha) alpha)``,
    ``C2 = L_n alpha sigma^2 / (2 - L_n alpha)``.
    """
    _check_positive(L_n=L_n, alpha=alpha)
    _check_gap(f0, f_star)
    if not alpha < 2.0 / L_n:
        raise TheoryWindowError(f"alpha={alpha} must lie in (0, 2/L_n) = (0, {2.0 / L_n})")
    if sigma_sq < 0:
        raise TheoryWindowError("sigma_sq must be nonnegative")
    denom = (2.0 - L_n * alpha) * alpha
    return TheoryConstants(
        "constant_lr",
        C1=2.0 * (f0 - f_star) / denom,
        C2=L_n * alpha * sigma_sq / (2.0 - L_n * alpha),
        inputs=dict(f0=f0, f_star=f_star, L_n=L_n, alpha=alpha, sigma_sq=sigma_sq),
        denominator=denom,
    )


def bound_rhs(tc: TheoryConstants, K, b) -> float:
    """``C1/K + C2/b``."""
    return tc.C1 / K + tc.C2 / b


def _feasible(tc, eps, b):
    if not eps > 0:
        raise ValueError(f"eps must be positive, got {eps}")
    threshold = tc.C2 / eps**2
    b = np.asarray(b, dtype=float)
    if np.any(b <= threshold):
        raise InfeasibleBatchError(
            f"batch size below feasibility threshold C2/eps^2 = {threshold}"
        )
    return b


def _scalar(x):
    return float(x) if np.ndim(x) == 0 else x


def steps_needed(tc: TheoryConstants, eps, b):
    """``K(b) = C1 b / (eps^2 b - C2)``; real-valued, vectorized over ``b``."""
    b = _feasible(tc, eps, b)
    return _scalar(tc.C1 * b / (eps**2 * b - tc.C2))


def sfo_complexity(tc: TheoryConstants, eps, b):
    """``N(b) = K(b) b = C1 b^2 / (eps^2 b - C2)``."""
    b = _feasible(tc, eps, b)
    return _scalar(tc.C1 * b**2 / (eps**2 * b - tc.C2))


def dK_db(tc, eps, b):
    b = _feasible(tc, eps, b)
    return _scalar(-tc.C1 * tc.C2 / (eps**2 * b - tc.C2) ** 2)


def d2K_db2(tc, eps, b):
    b = _feasible(tc, eps, b)
    return _scalar(2.0 * tc.C1 * tc.C2 * eps**2 / (eps**2 * b - tc.C2) ** 3)


def dN_db(tc, eps, b):
    b = _feasible(tc, eps, b)
    return _scalar(tc.C1 * b * (eps**2 * b - 2.0 * tc.C2) / (eps**2 * b - tc.C2) ** 2)


def d2N_db2(tc, eps, b):
    b = _feasible(tc, eps, b)
    return _scalar(2.0 * tc.C1 * tc.C2**2 / (eps**2 * b - tc.C2) ** 3)


def critical_batch_from_hyperparameters(X, L_n, alpha_max, delta, c) -> float:
    """``X L_n^2 alpha_max^2 / (2 (1-c) delta - (L_n alpha_max - 1) L_n alpha_max)``.

    Relative to the bound constants ``X = 2 sigma^2 / eps^2`` makes this equal
    to ``2 C2 / eps^2``.  When ``X`` is fitted from measured critical batch
    sizes (see :func:`estimate_X_Ln`) the constant is absorbed by the fit.
    """
    u = L_n * alpha_max
    denom = 2.0 * (1.0 - c) * delta - (u - 1.0) * u
    if not denom > 0:
        raise TheoryWindowError(f"nonpositive denominator {denom}")
    return X * u * u / denom


def critical_batch(tc: TheoryConstants, eps) -> float:
    """``b* = 2 C2 / eps^2``, the minimizer of ``N``.

    For case (ii) constants the value is cross-checked against the
    hyperparameter form :func:`critical_batch_from_hyperparameters` with
    ``X = 2 sigma^2 / eps^2``.
    """
    if not eps > 0:
        raise ValueError(f"eps must be positive, got {eps}")
    b_star = 2.0 * tc.C2 / eps**2
    if tc.regime == "armijo_case2":
        p = tc.inputs
        alt = critical_batch_from_hyperparameters(
            2.0 * p["sigma_sq"] / eps**2, p["L_n"], p["alpha_max"], p["delta"], p["c"]
        )
        if not math.isclose(b_star, alt, rel_tol=1e-10, abs_tol=1e-300):
            raise ArithmeticError(f"critical batch forms disagree: {b_star} vs {alt}")
    return b_star


@dataclass(frozen=True)
class CriticalBatchEstimate:
    """``X`` and ``L_n`` fitted from two measured ``(c, b*)`` pairs."""

    X: float
    L_n: float
    alpha_max: float
    delta: float
    pairs: tuple

    def __post_init__(self):
        if not (self.X > 0 and self.L_n > 0):
            raise ValueError("X and L_n must be positive")

    def predict(self, c) -> float:
        return critical_batch_from_hyperparameters(self.X, self.L_n, self.alpha_max, self.delta, c)


def estimate_X_Ln(pair1, pair2, delta, alpha_max) -> CriticalBatchEstimate:
    """Solve two critical-batch equations for ``X`` and ``L_n``.

    With ``u = L_n alpha_max`` and ``D_j = 2 (1 - c_j) delta`` each pair gives
    ``X = b_j (D_j - u^2 + u) / u^2``.  Equating the two yields

        (b2 - b1) u^2 - (b2 - b1) u + (b1 D1 - b2 D2) = 0.

    The roots sum to 1, so at most one exceeds 1 (``alpha_max > 1/L_n``, the
    regime the formula comes from); that root is preferred, otherwise the
    largest positive root giving ``X > 0``.
    """
    (c1, b1), (c2, b2) = pair1, pair2
    if c1 == c2:
        raise ValueError("the two pairs must use distinct c values")
    if not (b1 > 0 and b2 > 0):
        raise ValueError("critical batch sizes must be positive")
    D1 = 2.0 * (1.0 - c1) * delta
    D2 = 2.0 * (1.0 - c2) * delta
    a = b2 - b1
    const = b1 * D1 - b2 * D2
    if a == 0:
        raise ValueError("inconsistent measurements: equal b* at distinct c admits no solution")
    disc = 1.0 - 4.0 * const / a
    if disc < 0:
        raise ValueError("inconsistent measurements: no real root for L_n")
    roots = sorted({(1.0 + math.sqrt(disc)) / 2.0, (1.0 - math.sqrt(disc)) / 2.0}, reverse=True)
    for u in roots:
        if u <= 0:
            continue
        X = b1 * (D1 - u * u + u) / (u * u)
        if X > 0 and D2 - u * u + u > 0:
            return CriticalBatchEstimate(
                X=X,
                L_n=u / alpha_max,
                alpha_max=alpha_max,
                delta=delta,
                pairs=(tuple(pair1), tuple(pair2)),
            )
    raise ValueError("inconsistent measurements: no positive root for L_n")


class ConstantsComparison(NamedTuple):
    c1_armijo_smaller: bool
    c2_armijo_smaller: bool
    dominates: bool
    c1_condition: tuple
    c2_condition: tuple


def compare_constant_vs_armijo(tc_const: TheoryConstants, tc_armijo: TheoryConstants):
    """Compare a constant-step bound with an Armijo bound.

    ``C1_A < C1_C`` iff the constant-step denominator ``(2 - L_n alpha) alpha``
    is below the Armijo one.  ``C2_A < C2_C`` iff, after dividing out ``L_n``,
    ``alpha_max^2 sigma_A^2 / D_A < alpha sigma_C^2 / (2 - L_n alpha)``.  When
    both hold, ``K_A(b) < K_C(b)`` and ``N_A(b) < N_C(b)`` at every ``b``
    feasible for the constant-step bound.
    """
    c1 = tc_armijo.C1 < tc_const.C1
    c2 = tc_armijo.C2 < tc_const.C2
    L_n = tc_const.inputs.get("L_n", math.nan)
    return ConstantsComparison(
        c1,
        c2,
        c1 and c2,
        (tc_const.denominator, tc_armijo.denominator),
        (tc_armijo.C2 / L_n, tc_const.C2 / L_n),
    )


@dataclass
class ShapeReport:
    grid: np.ndarray
    K: np.ndarray
    N: np.ndarray
    K_decreasing: bool
    K_convex: bool
    N_convex: bool
    dK_max_rel_err: float
    d2K_max_rel_err: float
    dN_max_rel_err: float
    d2N_max_rel_err: float
    tol: float = 1e-6
    tol_second: float = 1e-4

    @property
    def ok(self) -> bool:
        first = max(self.dK_max_rel_err, self.dN_max_rel_err) <= self.tol
        second = max(self.d2K_max_rel_err, self.d2N_max_rel_err) <= self.tol_second
        return self.K_decreasing and self.K_convex and self.N_convex and first and second


def _scaled_err(approx, exact, scale):
    return float(np.max(np.abs(approx - exact) / scale))


def kb_shape_report(tc: TheoryConstants, eps, grid, tol=1e-6, tol_second=1e-4) -> ShapeReport:
    """Check monotonicity/convexity of ``K`` and convexity of ``N`` on a grid.

    Differences are taken on the grid as given (divided differences, so the
    grid need not be uniform).  Derivative formulas are compared against
    central differences with step ``1e-4 (b - C2/eps^2)``, second
    derivatives with ``1e-3 (b - C2/eps^2)``.  Errors are relative to the
    magnitude of the exact derivative; because ``N' = K + b K'`` vanishes at
    ``b*``, derivatives of ``N`` are measured against ``|K| + b |K'|`` (and
    ``2 |K'| + b |K''|``).
    """
    grid = np.sort(np.atleast_1d(np.asarray(grid, dtype=float)))
    K = np.atleast_1d(steps_needed(tc, eps, grid))
    N = np.atleast_1d(sfo_complexity(tc, eps, grid))

    def divided_second(y):
        return np.diff(np.diff(y) / np.diff(grid))

    gap = grid - tc.C2 / eps**2
    h1 = 1e-4 * gap
    h2 = 1e-3 * gap

    def central1(fn):
        return (fn(tc, eps, grid + h1) - fn(tc, eps, grid - h1)) / (2 * h1)

    def central2(fn):
        return (fn(tc, eps, grid + h2) - 2 * fn(tc, eps, grid) + fn(tc, eps, grid - h2)) / h2**2

    dK = np.atleast_1d(dK_db(tc, eps, grid))
    d2K = np.atleast_1d(d2K_db2(tc, eps, grid))
    tiny = 1e-12 * K / grid
    if tc.C2 > 0:
        K_decreasing = bool(np.all(np.diff(K) < 0))
    else:
        K_decreasing = bool(np.allclose(np.diff(K), 0.0))
    return ShapeReport(
        grid=grid,
        K=K,
        N=N,
        K_decreasing=K_decreasing,
        K_convex=bool(np.all(divided_second(K) >= 0)),
        N_convex=bool(np.all(divided_second(N) >= 0)),
        dK_max_rel_err=_scaled_err(central1(steps_needed), dK, np.abs(dK) + tiny),
        d2K_max_rel_err=_scaled_err(central2(steps_needed), d2K, np.abs(d2K) + tiny / grid),
        dN_max_rel_err=_scaled_err(
            central1(sfo_complexity), np.atleast_1d(dN_db(tc, eps, grid)), K + grid * np.abs(dK)
        ),
        d2N_max_rel_err=_scaled_err(
            central2(sfo_complexity),
            np.atleast_1d(d2N_db2(tc, eps, grid)),
            2 * np.abs(dK) + grid * np.abs(d2K) + tiny / grid,
        ),
        tol=tol,
        tol_second=tol_second,
    )
