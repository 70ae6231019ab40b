"""Acceptance criteria 1-10.

Each test prints one ``criterion N: PASS|FAIL`` line (visible under
``pytest -v``) and then asserts.  ``python tests/test_acceptance.py`` runs
the same checks and prints only the summary lines.
"""

import sys
import time
from fractions import Fraction
from pathlib import Path

import numpy as np
import pytest
from scipy.stats import spearmanr

from armijo_sgd.estimators import batch_gradient_variance, default_probe_points, estimate_sigma_sq
from armijo_sgd.harness import SweepConfig, run_sweep, theory_constants_for, validate_bound
from armijo_sgd.linesearch import ArmijoConfig, backtrack, verify_counterexample
from armijo_sgd.objectives import lipschitz_summary, make_nonconvex_suite, make_quadratic_suite
from armijo_sgd.optimizer import StopRule
from armijo_sgd.theory import (
    TheoryConstants,
    critical_batch,
    dN_db,
    estimate_X_Ln,
    kb_shape_report,
    sfo_complexity,
)

_capsys_ref = {}


@pytest.fixture(autouse=True)
def _expose_capsys(capsys):
    _capsys_ref["c"] = capsys
    yield
    _capsys_ref.pop("c", None)


def report(n, ok, elapsed, limit, detail=""):
    ok = bool(ok) and (limit is None or elapsed < limit)
    budget = f" (<{limit:g} s)" if limit is not None else ""
    line = f"criterion {n}: {'PASS' if ok else 'FAIL'} [{elapsed:.2f} s{budget}] {detail}".rstrip()
    cap = _capsys_ref.get("c")
    if cap is not None:
        with cap.disabled():
            print("\n" + line)
    else:
        print(line)
    return ok


# ---------------------------------------------------------------------------
# Shared configurations
# ---------------------------------------------------------------------------

C34_SUITE = dict(n=64, dim=8, seed=0)
C34_K = (10, 100)
C34_B = (1, 4, 16, 64)
C34_SEEDS = range(20)

C8_CONFIG = dict(
    suite={"suite": "nonconvex", "n": "512", "dim": "10", "seed": "0", "label_noise": "0.0"},
    batch_sizes=tuple(2**k for k in range(10)),
    seeds=tuple(range(10)),
    stop=StopRule.grad_norm_below(0.007, cap=5000),
    armijo=ArmijoConfig(c=0.1, delta=0.9, gamma=2.0, alpha_max=1.0),
)


def _c34_setup():
    obj = make_quadratic_suite(**C34_SUITE)
    theta0 = obj.initial_point(0)
    L_n = lipschitz_summary(obj).L_n
    return obj, theta0, L_n


def _c34_sigma(obj, theta0, cfg):
    points = default_probe_points(obj, theta0, cfg, 1, seed=0)
    return estimate_sigma_sq(obj, points).sigma_sq


# ---------------------------------------------------------------------------
# Criteria
# ---------------------------------------------------------------------------


def test_criterion_1_counterexample():
    t = time.perf_counter()
    rep = verify_counterexample(alpha=0.5, theta=1.0, c=0.1, alpha_max=1.0)
    elapsed = time.perf_counter() - t
    # the right side rounds to the double nearest 4/5
    exact = rep.armijo_lhs == 0.0 and rep.armijo_rhs == float(Fraction(4, 5))
    ok = rep.is_counterexample and rep.claimed_bound == 0.9 and rep.alpha == 0.5 and exact
    for line in rep.lines():
        print(line)
    detail = f"lhs={rep.armijo_lhs!r} rhs={rep.armijo_rhs!r} bound={rep.claimed_bound!r}"
    assert report(1, ok, elapsed, 1.0, detail)


def test_criterion_2_step_lower_bound():
    t = time.perf_counter()
    rng = np.random.default_rng(2024)
    draws, worst = 0, np.inf
    for _ in range(150):
        obj = make_quadratic_suite(int(rng.integers(2, 33)), int(rng.integers(1, 9)), seed=int(rng.integers(1 << 30)))
        L_max = lipschitz_summary(obj).L_max
        c = rng.uniform(0.01, 0.5)
        delta = rng.uniform(0.3, 0.95)
        cfg = ArmijoConfig(c=c, delta=delta, alpha_max=10.0 / float(np.min(obj.lipschitz)))
        theta = rng.normal(size=obj.dim) * rng.choice([0.1, 1.0, 10.0])
        idx = rng.integers(0, obj.n, size=int(rng.integers(1, obj.n + 1)))
        f_b, g = obj.value_and_gradient(idx, theta)
        if not np.any(g):
            continue
        out = backtrack(lambda x: obj.batch_value(idx, x), theta, g, cfg, cfg.alpha_max, f_theta=f_b)
        margin = out.alpha - cfg.step_lower_bound(L_max)
        worst = min(worst, margin)
        draws += 1
    elapsed = time.perf_counter() - t
    ok = draws >= 100 and worst >= -1e-12
    assert report(2, ok, elapsed, 10.0, f"draws={draws} min(alpha - 2 delta (1-c)/L_max)={worst:.3e}")


def _bound_check(n, alpha_const=None):
    t = time.perf_counter()
    obj, theta0, L_n = _c34_setup()
    cfg = ArmijoConfig(c=0.05, delta=0.9, gamma=2.0, alpha_max=1.5 / L_n)
    # sigma^2 probes follow the Armijo pilot path in both cases
    sigma = _c34_sigma(obj, theta0, cfg)
    if alpha_const is None:
        tc = theory_constants_for(obj, theta0, sigma, cfg=cfg)
        window = 1 / L_n < cfg.alpha_max < min(2 / L_n, tc.alpha_hat) and tc.regime == "armijo_case2"
        rep = validate_bound(obj, tc, C34_K, C34_B, C34_SEEDS, theta0, cfg=cfg)
    else:
        tc = theory_constants_for(obj, theta0, sigma, alpha=alpha_const)
        window = tc.regime == "constant_lr"
        rep = validate_bound(obj, tc, C34_K, C34_B, C34_SEEDS, theta0, alpha=alpha_const)
    elapsed = time.perf_counter() - t
    for line in rep.lines():
        print(line)
    worst = max(r.lhs / r.rhs for r in rep.rows)
    ok = window and rep.ok and len(rep.rows) == len(C34_K) * len(C34_B)
    detail = f"C1={tc.C1:.4g} C2={tc.C2:.4g} sigma^2={sigma:.4g} max lhs/rhs={worst:.3g}"
    return report(n, ok, elapsed, 60.0, detail)


def test_criterion_3_armijo_bound_case_ii():
    assert _bound_check(3)


def test_criterion_4_constant_step_bound():
    _, _, L_n = _c34_setup()
    assert _bound_check(4, alpha_const=1.0 / L_n)


def _random_triples(rng, count):
    for _ in range(count):
        C1 = 10 ** rng.uniform(-2, 3)
        C2 = 10 ** rng.uniform(-3, 2)
        eps = 10 ** rng.uniform(-2, 0.5)
        yield TheoryConstants.given(C1, C2), eps


def _grid(rng, tc, eps):
    lo = tc.C2 / eps**2 * (1 + 10 ** rng.uniform(-2, 0))
    return np.geomspace(lo, lo * 10 ** rng.uniform(0.5, 3), 10)


def test_criterion_5_K_shape():
    t = time.perf_counter()
    rng = np.random.default_rng(5)
    fails, worst = 0, 0.0
    for tc, eps in _random_triples(rng, 1000):
        rep = kb_shape_report(tc, eps, _grid(rng, tc, eps))
        worst = max(worst, rep.dK_max_rel_err)
        if not (rep.K_decreasing and rep.K_convex and rep.dK_max_rel_err <= 1e-6):
            fails += 1
    elapsed = time.perf_counter() - t
    assert report(5, fails == 0, elapsed, 5.0, f"triples=1000 failures={fails} max dK rel err={worst:.2e}")


def test_criterion_6_N_convex_and_minimizer():
    t = time.perf_counter()
    rng = np.random.default_rng(6)
    fails = 0
    for tc, eps in _random_triples(rng, 1000):
        rep = kb_shape_report(tc, eps, _grid(rng, tc, eps))
        b_star = critical_batch(tc, eps)
        if b_star != 2 * tc.C2 / eps**2:
            fails += 1
            continue
        left = float(dN_db(tc, eps, b_star * (1 - 1e-6)))
        right = float(dN_db(tc, eps, b_star * (1 + 1e-6)))
        h = 0.01 * b_star
        N = [float(sfo_complexity(tc, eps, b)) for b in (b_star - h, b_star, b_star + h)]
        if not (rep.N_convex and left < 0 < right and N[0] > N[1] < N[2]):
            fails += 1
    elapsed = time.perf_counter() - t
    assert report(6, fails == 0, elapsed, 5.0, f"triples=1000 failures={fails}")


def test_criterion_7_numerology():
    t = time.perf_counter()
    est = estimate_X_Ln((0.05, 32), (0.30, 64), delta=0.9, alpha_max=10)
    pred = est.predict(0.25)
    elapsed = time.perf_counter() - t
    ok = abs(est.L_n - 0.153) <= 0.001 and abs(est.X - 12.3) <= 0.1 and abs(pred - 53) <= 1
    assert report(7, ok, elapsed, 1.0, f"L_n={est.L_n:.6f} X={est.X:.5f} b*(0.25)={pred:.4f}")


_SWEEP_CACHE = {}


def _c8_sweep(out_dir):
    t = time.perf_counter()
    res = run_sweep(SweepConfig(output_dir=str(out_dir), **C8_CONFIG))
    return res, time.perf_counter() - t


def _n_shape_ok(N):
    finite = np.isfinite(N)
    if not finite.all():
        return False
    j = int(np.argmin(N))
    if 0 < j < len(N) - 1:
        return True
    if j == len(N) - 1:
        return bool(np.any(N[1:-1] <= 1.1 * N[j]))
    return False


def test_criterion_8_scaling_trend(tmp_path):
    res, elapsed = _c8_sweep(tmp_path / "c8")
    _SWEEP_CACHE["dir"] = tmp_path / "c8"
    for row in res.summary_rows():
        print(row)
    rho = spearmanr(res.batch_sizes, res.K_median)[0]
    shape = _n_shape_ok(res.N)
    ok = rho <= -0.8 and shape and int(res.not_reached.sum()) == 0
    detail = f"spearman={rho:.3f} b*_measured={res.b_star_measured} N-shape={'ok' if shape else 'bad'}"
    assert report(8, ok, elapsed, 300.0, detail)


def test_criterion_9_variance_scaling():
    t = time.perf_counter()
    obj = make_nonconvex_suite(512, 10, seed=0)
    theta = obj.initial_point(0)
    v1 = batch_gradient_variance(obj, theta, 1, n_batches=100_000, seed=0)
    worst = 0.0
    for b in (2, 4, 8):
        vb = batch_gradient_variance(obj, theta, b, n_batches=100_000, seed=b)
        worst = max(worst, abs(vb * b / v1 - 1))
    elapsed = time.perf_counter() - t
    assert report(9, worst <= 0.2, elapsed, 30.0, f"max |b var(b)/var(1) - 1| = {worst:.4f}")


def test_criterion_10_determinism(tmp_path):
    first = _SWEEP_CACHE.get("dir")
    t = time.perf_counter()
    if first is None or not first.exists():
        first = tmp_path / "first"
        _c8_sweep(first)
    second = tmp_path / "second"
    _c8_sweep(second)
    elapsed = time.perf_counter() - t
    names = ("sweep.csv", "summary.csv")
    same = all((first / n).read_bytes() == (second / n).read_bytes() for n in names)
    assert report(10, same, elapsed, None, "sweep.csv and summary.csv byte-identical" if same else "outputs differ")


if __name__ == "__main__":
    import tempfile

    results = []
    with tempfile.TemporaryDirectory() as tmp:
        for name, fn in sorted(
            ((k, v) for k, v in dict(globals()).items() if k.startswith("test_criterion_")),
            key=lambda kv: int(kv[0].split("_")[2]),
        ):
            kwargs = {"tmp_path": Path(tmp) / name} if "tmp_path" in fn.__code__.co_varnames else {}
            if kwargs:
                kwargs["tmp_path"].mkdir()
            try:
                fn(**kwargs)
                results.append(True)
            except AssertionError:
                results.append(False)
    sys.exit(0 if all(results) else 1)
