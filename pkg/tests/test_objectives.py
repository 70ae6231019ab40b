import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from armijo_sgd.objectives import (
    LipschitzSummary,
    QuadraticSuite,
    full_gradient,
    full_value,
    lipschitz_summary,
    make_counterexample,
    make_mlp_suite,
    make_nonconvex_suite,
    make_quadratic_suite,
    suite_from_config,
)

from gradcheck import central_diff, power_iteration, rel_err


def test_counterexample_values():
    obj = make_counterexample()
    assert (obj.n, obj.dim) == (1, 1)
    assert full_value(obj, np.array([1.0])) == 1.0
    assert full_value(obj, np.array([3.0])) == 9.0
    assert full_gradient(obj, np.array([1.0]))[0] == 2.0
    assert obj.lower_bound == 0.0
    summary = lipschitz_summary(obj)
    assert summary.L_n == summary.L_max == 2.0


def test_dimension_mismatch():
    obj = make_quadratic_suite(4, 3)
    with pytest.raises(ValueError):
        full_value(obj, np.zeros(2))
    with pytest.raises(ValueError):
        full_gradient(obj, np.zeros(4))


def test_quadratic_minimum_and_stationarity():
    obj = make_quadratic_suite(16, 5, seed=3)
    x = obj.minimizer()
    assert np.linalg.norm(full_gradient(obj, x)) < 1e-12
    assert full_value(obj, x) == pytest.approx(obj.minimum(), rel=1e-12, abs=1e-12)


def test_full_value_matches_brute_force_sum():
    obj = make_quadratic_suite(12, 4, seed=1)
    theta = np.random.default_rng(5).normal(size=4)
    brute = sum(obj.component_value(i, theta) for i in range(obj.n)) / obj.n
    assert full_value(obj, theta) == pytest.approx(brute, rel=1e-13)
    brute_g = sum(obj.component_gradient(i, theta) for i in range(obj.n)) / obj.n
    np.testing.assert_allclose(full_gradient(obj, theta), brute_g, rtol=1e-12, atol=1e-14)


def test_one_dimensional_quadratic_reduces_to_counterexample():
    obj = QuadraticSuite(np.array([[[2.0]]]), np.array([[0.0]]))
    ref = make_counterexample()
    for t in (-1.5, 0.0, 2.0):
        x = np.array([t])
        assert full_value(obj, x) == full_value(ref, x)
    assert obj.lipschitz[0] == 2.0


def test_quadratic_lipschitz_vs_power_iteration():
    obj = make_quadratic_suite(10, 6, seed=2)
    for i in range(obj.n):
        assert obj.lipschitz[i] == pytest.approx(power_iteration(obj.A[i]), rel=1e-8)


def test_quadratic_rejects_indefinite():
    A = np.array([[[1.0, 0.0], [0.0, -1.0]]])
    with pytest.raises(ValueError):
        QuadraticSuite(A, np.zeros((1, 2)))


@pytest.mark.parametrize(
    "obj",
    [
        make_quadratic_suite(8, 5, seed=0),
        make_nonconvex_suite(8, 5, seed=0),
    ],
    ids=["quadratic", "nonconvex"],
)
def test_component_gradients_match_finite_differences(obj):
    rng = np.random.default_rng(0)
    for _ in range(5):
        theta = rng.normal(size=obj.dim) * 2
        for i in range(obj.n):
            fd = central_diff(lambda t: obj.component_value(i, t), theta)
            assert rel_err(obj.component_gradient(i, theta), fd) < 1e-5


def test_mlp_full_gradient_matches_finite_differences():
    obj = make_mlp_suite(40, widths=(8, 6), seed=1)
    theta = obj.initial_point(1)
    fd = central_diff(lambda t: full_value(obj, t), theta)
    assert rel_err(full_gradient(obj, theta), fd) < 1e-4


def test_mlp_component_gradient_on_random_coordinates():
    obj = make_mlp_suite(30, widths=(10, 10), seed=2)
    theta = obj.initial_point(3)
    coords = np.random.default_rng(4).choice(obj.dim, size=20, replace=False)
    for i in (0, 7, 29):
        g = obj.component_gradient(i, theta)[coords]
        fd = central_diff(lambda t: obj.component_value(i, t), theta, coords)
        assert rel_err(g, fd) < 1e-3
    # per-example gradients agree with batch backprop
    idx = np.array([1, 1, 5, 9])
    np.testing.assert_allclose(
        obj.batch_gradient(idx, theta), obj.component_gradients(idx, theta).mean(axis=0), atol=1e-12
    )


def test_mlp_descends_and_separates_blobs():
    obj = make_mlp_suite(150, widths=(16, 16), seed=0)
    theta = obj.initial_point(0)
    f_init = full_value(obj, theta)
    for _ in range(100):
        theta = theta - 0.5 * full_gradient(obj, theta)
    assert full_value(obj, theta) < f_init
    for _ in range(3000):
        theta = theta - 0.5 * full_gradient(obj, theta)
    assert obj.accuracy(theta) == 1.0


def test_mlp_declares_nothing():
    obj = make_mlp_suite(20)
    assert obj.lipschitz is None and obj.lower_bound is None
    assert obj.has_label_oracle
    with pytest.raises(ValueError):
        lipschitz_summary(obj)
    with pytest.raises(ValueError):
        make_mlp_suite(20, widths=(128, 8))


def _hessian_fd(fn, theta, h=1e-4):
    d = theta.size
    H = np.zeros((d, d))
    for j in range(d):
        e = np.zeros(d)
        e[j] = h
        H[:, j] = (fn(theta + e) - fn(theta - e)) / (2 * h)
    return 0.5 * (H + H.T)


def test_nonconvex_suite_has_negative_curvature():
    obj = make_nonconvex_suite(5, 3, seed=0)
    rng = np.random.default_rng(1)
    found = False
    for _ in range(50):
        theta = rng.normal(size=obj.dim) * 3
        H = _hessian_fd(lambda t: obj.component_gradient(0, t), theta)
        if np.linalg.eigvalsh(H)[0] < -1e-6:
            found = True
            break
    assert found


def test_nonconvex_lower_bound_on_random_probes():
    obj = make_nonconvex_suite(20, 4, seed=0)
    rng = np.random.default_rng(2)
    thetas = rng.normal(size=(500, obj.dim)) * rng.choice([0.1, 1.0, 10.0, 100.0], size=(500, 1))
    for theta in thetas:
        assert np.all(obj.component_values(obj.all_indices, theta) >= obj.component_lower_bounds)


def _max_secant(obj, rng, pairs=200, scale=3.0):
    worst = np.zeros(obj.n)
    for _ in range(pairs):
        x = rng.normal(size=obj.dim) * scale
        y = x + rng.normal(size=obj.dim) * rng.choice([1e-3, 0.1, 1.0])
        diff = obj.component_gradients(obj.all_indices, x) - obj.component_gradients(obj.all_indices, y)
        worst = np.maximum(worst, np.linalg.norm(diff, axis=1) / np.linalg.norm(x - y))
    return worst


@pytest.mark.parametrize("maker", [make_quadratic_suite, make_nonconvex_suite])
def test_declared_lipschitz_bounds_secants(maker):
    obj = maker(10, 4, seed=1)
    worst = _max_secant(obj, np.random.default_rng(0))
    assert np.all(worst <= obj.lipschitz * (1 + 1e-9))


@pytest.mark.parametrize("maker", [make_quadratic_suite, make_nonconvex_suite])
def test_descent_inequality(maker):
    obj = maker(10, 4, seed=2)
    rng = np.random.default_rng(3)
    for _ in range(200):
        x = rng.normal(size=obj.dim) * 2
        y = x + rng.normal(size=obj.dim)
        fx = obj.component_values(obj.all_indices, x)
        fy = obj.component_values(obj.all_indices, y)
        gx = obj.component_gradients(obj.all_indices, x)
        rhs = fx + gx @ (y - x) + 0.5 * obj.lipschitz * np.sum((y - x) ** 2)
        assert np.all(fy <= rhs + 1e-9)


def test_l_n_is_exact_mean():
    obj = make_quadratic_suite(7, 3, seed=4)
    s = lipschitz_summary(obj)
    assert s.L_n == float(np.mean(obj.lipschitz))
    assert s.L_max == float(np.max(obj.lipschitz))
    with pytest.raises(ValueError):
        LipschitzSummary(2.0, 1.0)


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 2**31 - 1), scale=st.floats(0.01, 10.0))
def test_oracles_are_deterministic(seed, scale):
    obj = make_nonconvex_suite(6, 3, seed=seed % 1000)
    theta = np.random.default_rng(seed).normal(size=3) * scale
    a = obj.component_gradients(obj.all_indices, theta)
    b = obj.component_gradients(obj.all_indices, theta.copy())
    assert np.array_equal(a, b)
    again = make_nonconvex_suite(6, 3, seed=seed % 1000)
    assert np.array_equal(again.X, obj.X)


def test_suite_from_config():
    obj = suite_from_config({"suite": "quadratic", "n": "6", "dim": "2", "seed": "1"})
    ref = make_quadratic_suite(6, 2, seed=1)
    assert np.array_equal(obj.A, ref.A)
    mlp = suite_from_config({"suite": "mlp", "n": "30", "widths": "4, 5"})
    assert mlp.layer_sizes[1:3] == (4, 5)
    assert suite_from_config({"suite": "counterexample"}).n == 1
    with pytest.raises(ValueError):
        suite_from_config({"suite": "nope"})
