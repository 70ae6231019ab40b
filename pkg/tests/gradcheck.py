"""Finite-difference and brute-force oracles shared by the tests."""

import numpy as np


def fd_step(theta):
    return 1e-5 * (1.0 + np.linalg.norm(theta))


def central_diff(fn, theta, coords=None, h=None):
    """Central differences of scalar ``fn`` at ``theta`` along ``coords``."""
    theta = np.asarray(theta, dtype=float)
    h = fd_step(theta) if h is None else h
    coords = range(theta.size) if coords is None else coords
    out = []
    for j in coords:
        e = np.zeros_like(theta)
        e[j] = h
        out.append((fn(theta + e) - fn(theta - e)) / (2 * h))
    return np.array(out)


def rel_err(a, b):
    return float(np.linalg.norm(np.asarray(a) - np.asarray(b)) / max(np.linalg.norm(b), 1e-300))


def power_iteration(A, iters=5000, seed=0):
    v = np.random.default_rng(seed).normal(size=A.shape[0])
    lam = 0.0
    for _ in range(iters):
        w = A @ v
        lam_new = float(np.linalg.norm(w))
        if lam_new == 0.0:
            return 0.0
        v = w / lam_new
        if abs(lam_new - lam) <= 1e-15 * lam_new:
            break
        lam = lam_new
    return float(v @ A @ v)
