"""Finite-sum objectives ``f = (1/n) sum_i f_i`` with exact component oracles.

Three synthetic families are provided, each chosen so that the quantities the
convergence theory needs are available in closed form where possible:

``QuadraticSuite``
    ``f_i(x) = 0.5 x^T A_i x - b_i^T x`` with symmetric PSD ``A_i``.
    ``L_i = lambda_max(A_i)`` and ``f_{i,*} = -0.5 c_i^T A_i c_i`` where
    ``b_i = A_i c_i``.

``NonconvexSuite``
    ``f_i(x) = log(1 + exp(-y_i a_i^T x)) + reg * sum_j x_j^2 / (1 + x_j^2)``.
    The logistic Hessian is ``s(1-s) a_i a_i^T`` with ``s(1-s) <= 1/4``, so its
    spectral norm is at most ``|a_i|^2 / 4``.  For ``g(t) = t^2/(1+t^2)``,
    ``g''(t) = (2 - 6t^2) / (1+t^2)^3`` which ranges over ``[-1/2, 2]`` (max at
    ``t = 0``, min at ``t^2 = 1``).  The Hessian of ``f_i`` therefore has
    eigenvalues in ``[-reg/2, |a_i|^2/4 + 2 reg]`` and
    ``L_i = |a_i|^2 / 4 + 2 reg``.  Both terms are nonnegative, so
    ``f_{i,*} = 0``.  The regularizer has negative curvature wherever
    ``|x_j| > 1/sqrt(3)``, which makes every ``f_i`` nonconvex.

``MLPSuite``
    Per-example softmax cross-entropy of a two-hidden-layer tanh network on
    synthetic Gaussian blobs.  Lipschitz constants and the lower bound are not
    declared; see :mod:`armijo_sgd.estimators`.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "FiniteSumObjective",
    "LipschitzSummary",
    "MLPSuite",
    "NonconvexSuite",
    "QuadraticSuite",
    "full_gradient",
    "full_value",
    "lipschitz_summary",
    "make_counterexample",
    "make_mlp_suite",
    "make_nonconvex_suite",
    "make_quadratic_suite",
    "suite_from_config",
]


class FiniteSumObjective:
    """Base class for ``f(x) = (1/n) sum_i f_i(x)``.

    Subclasses implement :meth:`component_values` and
    :meth:`component_gradients`; the batch methods average over an index
    multiset (repeated indices count repeatedly).
    """

    name = "finite-sum"
    has_label_oracle = False

    def __init__(self, n, dim, lipschitz=None, component_lower_bounds=None):
        if n < 1 or dim < 1:
            raise ValueError(f"need n >= 1 and dim >= 1, got n={n}, dim={dim}")
        self.n = int(n)
        self.dim = int(dim)
        self.lipschitz = None if lipschitz is None else np.asarray(lipschitz, dtype=float)
        if self.lipschitz is not None and self.lipschitz.shape != (self.n,):
            raise ValueError("lipschitz must have one entry per component")
        self.component_lower_bounds = (
            None
            if component_lower_bounds is None
            else np.asarray(component_lower_bounds, dtype=float)
        )

    @property
    def lower_bound(self) -> float | None:
        """``f_* = (1/n) sum_i f_{i,*}``, or None when undeclared."""
        if self.component_lower_bounds is None:
            return None
        return float(np.mean(self.component_lower_bounds))

    @property
    def all_indices(self) -> np.ndarray:
        return np.arange(self.n)

    def check_theta(self, theta) -> np.ndarray:
        theta = np.asarray(theta, dtype=float)
        if theta.shape != (self.dim,):
            raise ValueError(f"expected parameter of shape ({self.dim},), got {theta.shape}")
        return theta

    def component_values(self, idx, theta) -> np.ndarray:
        raise NotImplementedError

    def component_gradients(self, idx, theta) -> np.ndarray:
        raise NotImplementedError

    def batch_value(self, idx, theta) -> float:
        return float(np.mean(self.component_values(idx, theta)))

    def batch_gradient(self, idx, theta) -> np.ndarray:
        return self.component_gradients(idx, theta).mean(axis=0)

    def value_and_gradient(self, idx, theta):
        """``(batch_value, batch_gradient)``; subclasses may share work."""
        return self.batch_value(idx, theta), self.batch_gradient(idx, theta)

    def component_value(self, i, theta) -> float:
        return float(self.component_values(np.array([i]), self.check_theta(theta))[0])

    def component_gradient(self, i, theta) -> np.ndarray:
        return self.component_gradients(np.array([i]), self.check_theta(theta))[0]

    def accuracy(self, theta) -> float | None:
        return None

    def initial_point(self, seed=0) -> np.ndarray:
        return np.random.default_rng(seed).normal(size=self.dim)


def full_value(obj: FiniteSumObjective, theta) -> float:
    """Mean of all component values."""
    return obj.batch_value(obj.all_indices, obj.check_theta(theta))


def full_gradient(obj: FiniteSumObjective, theta) -> np.ndarray:
    """Mean of all component gradients (exact, no sampling)."""
    return obj.batch_gradient(obj.all_indices, obj.check_theta(theta))


@dataclass(frozen=True)
class LipschitzSummary:
    L_n: float
    L_max: float
    source: str = "analytic"

    def __post_init__(self):
        if not (0 < self.L_n <= self.L_max):
            raise ValueError(f"need 0 < L_n <= L_max, got {self.L_n}, {self.L_max}")


def lipschitz_summary(obj: FiniteSumObjective) -> LipschitzSummary:
    """Mean and max of the declared per-component constants."""
    if obj.lipschitz is None:
        raise ValueError(f"{obj.name} does not declare Lipschitz constants; estimate them")
    return LipschitzSummary(float(np.mean(obj.lipschitz)), float(np.max(obj.lipschitz)))


# ---------------------------------------------------------------------------
# Quadratics
# ---------------------------------------------------------------------------


class QuadraticSuite(FiniteSumObjective):
    """``f_i(x) = 0.5 x^T A_i x - b_i^T x`` for stacked ``A`` (n, d, d), ``b`` (n, d)."""

    name = "quadratic"

    def __init__(self, A, b, lipschitz=None):
        A = np.asarray(A, dtype=float)
        b = np.asarray(b, dtype=float)
        if A.ndim != 3 or A.shape[1] != A.shape[2] or b.shape != A.shape[:2]:
            raise ValueError("A must be (n, d, d) and b must be (n, d)")
        if not np.allclose(A, np.swapaxes(A, 1, 2)):
            raise ValueError("A_i must be symmetric")
        eig = np.linalg.eigvalsh(A)
        if eig.min() < -1e-10 * max(1.0, np.abs(eig).max()):
            raise ValueError("A_i must be positive semidefinite")
        if lipschitz is None:
            lipschitz = eig[:, -1]
        # f_{i,*} = -0.5 b_i^T A_i^+ b_i, finite only when b_i lies in range(A_i)
        centers = np.stack([np.linalg.lstsq(Ai, bi, rcond=None)[0] for Ai, bi in zip(A, b)])
        resid = np.einsum("nij,nj->ni", A, centers) - b
        if np.abs(resid).max() > 1e-8 * max(1.0, np.abs(b).max()):
            raise ValueError("some b_i is outside range(A_i); component unbounded below")
        super().__init__(
            A.shape[0],
            A.shape[1],
            lipschitz=lipschitz,
            component_lower_bounds=-0.5 * np.einsum("ni,ni->n", b, centers),
        )
        self.A = A
        self.b = b
        self.centers = centers

    def component_values(self, idx, theta):
        Ax = self.A[idx] @ theta
        return 0.5 * (Ax @ theta) - self.b[idx] @ theta

    def component_gradients(self, idx, theta):
        return self.A[idx] @ theta - self.b[idx]

    def batch_value(self, idx, theta):
        Abar = self.A[idx].mean(axis=0)
        return float(0.5 * theta @ Abar @ theta - self.b[idx].mean(axis=0) @ theta)

    def batch_gradient(self, idx, theta):
        return self.A[idx].mean(axis=0) @ theta - self.b[idx].mean(axis=0)

    def value_and_gradient(self, idx, theta):
        Ax = self.A[idx].mean(axis=0) @ theta
        bbar = self.b[idx].mean(axis=0)
        return float(0.5 * Ax @ theta - bbar @ theta), Ax - bbar

    def minimizer(self) -> np.ndarray:
        """A minimizer of the full objective ``f``."""
        return np.linalg.lstsq(self.A.mean(axis=0), self.b.mean(axis=0), rcond=None)[0]

    def minimum(self) -> float:
        return full_value(self, self.minimizer())


def make_counterexample() -> QuadraticSuite:
    """The scalar ``f(x) = x^2`` (n = d = 1, L = 2, f_* = 0)."""
    return QuadraticSuite(np.array([[[2.0]]]), np.array([[0.0]]))


def make_quadratic_suite(n, dim, seed=0, condition_range=(0.5, 4.0), center_scale=1.0):
    """Random convex quadratic components with known spectra.

    Each ``A_i = Q_i diag(lam_i) Q_i^T`` has eigenvalues drawn log-uniformly
    from ``condition_range``; ``b_i = A_i c_i`` with Gaussian centers ``c_i``,
    so every component has a finite minimum.
    """
    lo, hi = condition_range
    if not (0 <= lo <= hi) or hi <= 0:
        raise ValueError(f"bad condition_range {condition_range}")
    rng = np.random.default_rng(seed)
    Q, _ = np.linalg.qr(rng.normal(size=(n, dim, dim)))
    if lo > 0:
        lam = np.exp(rng.uniform(np.log(lo), np.log(hi), size=(n, dim)))
    else:
        lam = rng.uniform(lo, hi, size=(n, dim))
    A = np.einsum("nij,nj,nkj->nik", Q, lam, Q)
    A = 0.5 * (A + np.swapaxes(A, 1, 2))
    centers = center_scale * rng.normal(size=(n, dim))
    b = np.einsum("nij,nj->ni", A, centers)
    return QuadraticSuite(A, b, lipschitz=lam.max(axis=1))


# ---------------------------------------------------------------------------
# Smooth nonconvex logistic suite
# ---------------------------------------------------------------------------


def _sigmoid(z):
    return 0.5 * (1.0 + np.tanh(0.5 * z))


class NonconvexSuite(FiniteSumObjective):
    """Logistic loss plus the bounded nonconvex penalty ``reg * x^2/(1+x^2)``."""

    name = "nonconvex"
    has_label_oracle = True

    def __init__(self, X, y, reg=0.1):
        X = np.asarray(X, dtype=float)
        y = np.asarray(y, dtype=float)
        if X.ndim != 2 or y.shape != (X.shape[0],):
            raise ValueError("X must be (n, d) and y must be (n,)")
        if not np.all(np.abs(y) == 1):
            raise ValueError("labels must be +1 or -1")
        if reg < 0:
            raise ValueError("reg must be nonnegative")
        n, d = X.shape
        super().__init__(
            n,
            d,
            lipschitz=np.einsum("ij,ij->i", X, X) / 4.0 + 2.0 * reg,
            component_lower_bounds=np.zeros(n),
        )
        self.X = X
        self.y = y
        self.reg = float(reg)

    def _penalty(self, theta):
        t2 = theta * theta
        return self.reg * float(np.sum(t2 / (1.0 + t2)))

    def _penalty_grad(self, theta):
        return self.reg * 2.0 * theta / (1.0 + theta * theta) ** 2

    def component_values(self, idx, theta):
        margins = self.y[idx] * (self.X[idx] @ theta)
        return np.logaddexp(0.0, -margins) + self._penalty(theta)

    def component_gradients(self, idx, theta):
        margins = self.y[idx] * (self.X[idx] @ theta)
        coef = -self.y[idx] * _sigmoid(-margins)
        return coef[:, None] * self.X[idx] + self._penalty_grad(theta)

    def batch_gradient(self, idx, theta):
        return self.value_and_gradient(idx, theta)[1]

    def value_and_gradient(self, idx, theta):
        X, y = self.X[idx], self.y[idx]
        margins = y * (X @ theta)
        coef = -y * _sigmoid(-margins)
        t2 = theta * theta
        value = np.mean(np.logaddexp(0.0, -margins)) + self.reg * np.sum(t2 / (1.0 + t2))
        grad = coef @ X / len(idx) + self.reg * 2.0 * theta / (1.0 + t2) ** 2
        return float(value), grad

    def accuracy(self, theta):
        pred = np.where(self.X @ theta > 0, 1.0, -1.0)
        return float(np.mean(pred == self.y))


def make_nonconvex_suite(n, dim, seed=0, reg=0.1, label_noise=0.1, feature_scale=1.0):
    """Teacher-labelled Gaussian features with a fraction of flipped labels."""
    rng = np.random.default_rng(seed)
    X = feature_scale * rng.normal(size=(n, dim))
    teacher = rng.normal(size=dim)
    y = np.where(X @ teacher > 0, 1.0, -1.0)
    flip = rng.random(n) < label_noise
    y[flip] *= -1.0
    return NonconvexSuite(X, y, reg=reg)


# ---------------------------------------------------------------------------
# Two-hidden-layer MLP on blobs
# ---------------------------------------------------------------------------


class MLPSuite(FiniteSumObjective):
    """Softmax cross-entropy of a ``tanh`` MLP, one component per example.

    Parameters are packed as ``[W1, b1, W2, b2, W3, b3]`` with ``W`` stored
    (fan_in, fan_out) in row-major order.
    """

    name = "mlp"
    has_label_oracle = True

    def __init__(self, X, labels, widths):
        X = np.asarray(X, dtype=float)
        labels = np.asarray(labels, dtype=int)
        if len(widths) != 2:
            raise ValueError("widths must give the two hidden layer sizes")
        n_classes = int(labels.max()) + 1
        self.layer_sizes = (X.shape[1], int(widths[0]), int(widths[1]), n_classes)
        self._shapes = []
        for fan_in, fan_out in zip(self.layer_sizes[:-1], self.layer_sizes[1:]):
            self._shapes.append((fan_in, fan_out))
        dim = sum(i * o + o for i, o in self._shapes)
        super().__init__(X.shape[0], dim)
        self.X = X
        self.labels = labels
        self.n_classes = n_classes

    def unpack(self, theta):
        params, pos = [], 0
        for fan_in, fan_out in self._shapes:
            W = theta[pos : pos + fan_in * fan_out].reshape(fan_in, fan_out)
            pos += fan_in * fan_out
            bias = theta[pos : pos + fan_out]
            pos += fan_out
            params.append((W, bias))
        return params

    def _forward(self, idx, theta):
        (W1, b1), (W2, b2), (W3, b3) = self.unpack(theta)
        x = self.X[idx]
        h1 = np.tanh(x @ W1 + b1)
        h2 = np.tanh(h1 @ W2 + b2)
        logits = h2 @ W3 + b3
        logits = logits - logits.max(axis=1, keepdims=True)
        logp = logits - np.log(np.exp(logits).sum(axis=1, keepdims=True))
        return x, h1, h2, logp

    def component_values(self, idx, theta):
        *_, logp = self._forward(idx, theta)
        return -logp[np.arange(len(idx)), self.labels[idx]]

    def _deltas(self, idx, theta):
        x, h1, h2, logp = self._forward(idx, theta)
        (_, _), (W2, _), (W3, _) = self.unpack(theta)
        d3 = np.exp(logp)
        d3[np.arange(len(idx)), self.labels[idx]] -= 1.0
        d2 = (d3 @ W3.T) * (1.0 - h2 * h2)
        d1 = (d2 @ W2.T) * (1.0 - h1 * h1)
        return ((x, d1), (h1, d2), (h2, d3))

    def component_gradients(self, idx, theta):
        blocks = []
        for inp, delta in self._deltas(idx, theta):
            blocks.append(np.einsum("mi,mo->mio", inp, delta).reshape(len(idx), -1))
            blocks.append(delta)
        return np.concatenate(blocks, axis=1)

    def batch_gradient(self, idx, theta):
        m = len(idx)
        blocks = []
        for inp, delta in self._deltas(idx, theta):
            blocks.append((inp.T @ delta).ravel() / m)
            blocks.append(delta.sum(axis=0) / m)
        return np.concatenate(blocks)

    def predict(self, theta):
        *_, logp = self._forward(self.all_indices, theta)
        return logp.argmax(axis=1)

    def accuracy(self, theta):
        return float(np.mean(self.predict(theta) == self.labels))

    def initial_point(self, seed=0):
        """Glorot-uniform weights, zero biases."""
        rng = np.random.default_rng(seed)
        parts = []
        for fan_in, fan_out in self._shapes:
            limit = np.sqrt(6.0 / (fan_in + fan_out))
            parts.append(rng.uniform(-limit, limit, size=fan_in * fan_out))
            parts.append(np.zeros(fan_out))
        return np.concatenate(parts)


def make_mlp_suite(n_samples, widths=(16, 16), seed=0, n_features=2, n_classes=3, spread=0.5):
    """Blobs around equally spaced centers on a circle of radius 3.

    Points are truncated to ``2.5 * spread`` from their center, so for the
    default ``spread`` the classes are linearly separable.
    """
    if max(widths) > 64 or n_samples > 10_000:
        raise ValueError("MLP suite is meant for desk-scale sizes")
    if n_features < 2:
        raise ValueError("need at least two input features")
    rng = np.random.default_rng(seed)
    angles = 2 * np.pi * np.arange(n_classes) / n_classes
    centers = np.zeros((n_classes, n_features))
    centers[:, 0] = 3.0 * np.cos(angles)
    centers[:, 1] = 3.0 * np.sin(angles)
    labels = np.arange(n_samples) % n_classes
    noise = rng.normal(size=(n_samples, n_features))
    radius = np.linalg.norm(noise, axis=1, keepdims=True)
    noise = np.where(radius > 2.5, noise * 2.5 / radius, noise)
    X = centers[labels] + spread * noise
    return MLPSuite(X, labels, widths)


# ---------------------------------------------------------------------------
# Config construction
# ---------------------------------------------------------------------------


def _int_tuple(value):
    if isinstance(value, str):
        return tuple(int(v) for v in value.replace(",", " ").split())
    return tuple(int(v) for v in value)


def _float_tuple(value):
    if isinstance(value, str):
        return tuple(float(v) for v in value.replace(",", " ").split())
    return tuple(float(v) for v in value)


def suite_from_config(cfg) -> FiniteSumObjective:
    """Build a suite from a flat mapping (``suite``, ``n``, ``dim``, ``seed``, ...)."""
    name = str(cfg.get("suite", "quadratic")).strip()
    seed = int(cfg.get("seed", 0))
    if name == "counterexample":
        return make_counterexample()
    if name == "quadratic":
        return make_quadratic_suite(
            int(cfg["n"]),
            int(cfg["dim"]),
            seed=seed,
            condition_range=_float_tuple(cfg.get("condition_range", (0.5, 4.0))),
            center_scale=float(cfg.get("center_scale", 1.0)),
        )
    if name == "nonconvex":
        return make_nonconvex_suite(
            int(cfg["n"]),
            int(cfg["dim"]),
            seed=seed,
            reg=float(cfg.get("reg", 0.1)),
            label_noise=float(cfg.get("label_noise", 0.1)),
            feature_scale=float(cfg.get("feature_scale", 1.0)),
        )
    if name == "mlp":
        return make_mlp_suite(
            int(cfg.get("n", cfg.get("n_samples", 300))),
            widths=_int_tuple(cfg.get("widths", (16, 16))),
            seed=seed,
            n_features=int(cfg.get("n_features", 2)),
            n_classes=int(cfg.get("n_classes", 3)),
        )
    raise ValueError(f"unknown suite {name!r}")
