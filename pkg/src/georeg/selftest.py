"""Fast numerical self-checks on small random instances (used by ``georeg selftest``)."""

import numpy as np

from . import toeplitz
from .flow import resnet_limit_error
from .updates import (MomentumState, compute_direction, direction_vector, line_search_step,
                      momentum_update, residual)


def _instance(rng, d, m, n, T):
    F = rng.standard_normal((d, T))
    X = rng.uniform(0, 1, (n, T))
    Y = np.eye(m)[:, rng.integers(0, m, T)]
    return F, X, Y, rng.standard_normal((m, d)) * 0.5, rng.standard_normal(m) * 0.1


def _loss(Y, D, c, F):
    Z = residual(Y, D, c, F)
    return np.mean(np.sum(Z * Z, axis=0))


def check_line_search(rng, trials=20):
    for _ in range(trials):
        F, X, Y, D, c = _instance(rng, 3, 2, 4, 30)
        Z = residual(Y, D, c, F)
        direction = compute_direction(F, [X], Z, D, "tanh")
        state = momentum_update(MomentumState.zeros_like(direction, [0.0, 0.0], 0.0), direction)
        Dpsi = D @ direction_vector(state, F, [X], "tanh")
        mu = line_search_step(Z, Dpsi)
        num, den = np.mean(np.sum(Z * Dpsi, 0)), np.mean(np.sum(Dpsi * Dpsi, 0))
        before, after = np.mean(np.sum(Z * Z, 0)), np.mean(np.sum((Z - mu * Dpsi) ** 2, 0))
        if abs(after - (before - num ** 2 / den)) > 1e-9 * before:
            return False
    return True


def check_finite_difference(rng, trials=20):
    for _ in range(trials):
        F, X, Y, D, c = _instance(rng, 4, 3, 5, 40)
        Z = residual(Y, D, c, F)
        direction = compute_direction(F, [X], Z, D, "tanh")
        state = momentum_update(MomentumState.zeros_like(direction, [0.0, 0.0], 0.0), direction)
        psi = direction_vector(state, F, [X], "tanh")
        h = 1e-4
        fd = (_loss(Y, D, c, F + h * psi) - _loss(Y, D, c, F - h * psi)) / (2 * h)
        exact = -2 * np.mean(np.sum(Z * (D @ psi), 0))
        if abs(fd - exact) > 1e-5 * abs(exact):
            return False
    return True


def check_resnet_limit(rng, trials=10):
    eps = np.array([1e-2, 1e-3, 1e-4])
    for _ in range(trials):
        W, b, f = rng.standard_normal((4, 4)), rng.standard_normal(4), rng.standard_normal(4)
        err = [resnet_limit_error("tanh", W, b, f, e) for e in eps]
        slope = np.polyfit(np.log(eps), np.log(err), 1)[0]
        if not 1.9 <= slope <= 2.1 or resnet_limit_error("identity", W, b, f, 1e-2) != 0.0:
            return False
    return True


def check_projection(rng):
    s = toeplitz.build_conv_structure(6, 6, 3)
    W = rng.standard_normal((36, 36))
    kernel, P = toeplitz.project_to_conv(W, s, normalize=False)
    _, Wconv = toeplitz.project_to_conv(W, s)
    V = toeplitz.conv_matrix(rng.standard_normal(9), s)
    idempotent = np.allclose(toeplitz.project_kernel(P, s), kernel, rtol=0, atol=1e-12)
    return idempotent and abs(np.sum((W - P) * V)) <= 1e-10 and np.sum(Wconv * W) > 0


CHECKS = [
    ("line search quadratic identity", check_line_search),
    ("steepest descent finite difference", check_finite_difference),
    ("modified residual block second-order limit", check_resnet_limit),
    ("convolution projection", check_projection),
]


def run_selftest(seed=0):
    rng = np.random.default_rng(seed)
    ok = True
    for name, check in CHECKS:
        passed = bool(check(rng))
        ok &= passed
        print(f"{'PASS' if passed else 'FAIL'} {name}")
    return ok
