import numpy as np
import pytest

from georeg.linear_init import (DimensionError, HeadParams, NumericError, compute_pca_basis,
                                fit_head, head_mse)


def test_axis_aligned_samples():
    X = np.array([[2.0, -2.0, 0.0, 0.0], [0.0, 0.0, 1.0, -1.0]])
    U = compute_pca_basis(X, 1)
    np.testing.assert_allclose(U, [[1.0, 0.0]], atol=1e-15)


def test_full_basis_is_orthonormal(rng):
    X = rng.standard_normal((6, 50))
    U = compute_pca_basis(X, 6)
    np.testing.assert_allclose(U @ U.T, np.eye(6), atol=1e-12)


def test_against_dense_eigendecomposition(rng):
    X = rng.standard_normal((5, 200)) * np.array([[3.0], [1.0], [2.0], [0.5], [1.5]])
    U = compute_pca_basis(X, 3)
    M = X @ X.T / X.shape[1]
    S = U @ M @ U.T
    np.testing.assert_allclose(S - np.diag(np.diag(S)), 0.0, atol=1e-8)
    assert np.all(np.diff(np.diag(S)) < 0)
    # oracle: the three largest eigenvalues of the second moment
    w = np.sort(np.linalg.eigvals(M).real)[::-1][:3]
    np.testing.assert_allclose(np.diag(S), w, rtol=1e-8)
    np.testing.assert_allclose(U @ U.T, np.eye(3), atol=1e-8)


def test_sign_convention(rng):
    X = rng.standard_normal((4, 100))
    for row in compute_pca_basis(X, 4):
        first = row[np.flatnonzero(np.abs(row) > 1e-12)[0]]
        assert first > 0


def test_column_permutation_invariance(rng):
    X = rng.standard_normal((5, 300))
    U1 = compute_pca_basis(X, 3)
    U2 = compute_pca_basis(X[:, rng.permutation(300)], 3)
    np.testing.assert_allclose(U1, U2, atol=1e-10)


def test_too_many_components(rng):
    with pytest.raises(DimensionError):
        compute_pca_basis(rng.standard_normal((3, 10)), 4)


def normal_equations_oracle(F, Y):
    """Affine least squares via lstsq on the design [F; 1]."""
    A = np.vstack([F, np.ones(F.shape[1])]).T
    sol, *_ = np.linalg.lstsq(A, Y.T, rcond=None)
    return sol[:-1].T, sol[-1]


def test_symmetric_scalar_fit():
    F = np.array([[1.0, -1.0, 1.0, -1.0]])
    Y = 3 * F + 0.5
    head = fit_head(F, Y)
    D, c = normal_equations_oracle(F, Y)
    np.testing.assert_allclose(head.D, [[3.0]], rtol=1e-7)
    np.testing.assert_allclose(head.c, [0.5], rtol=1e-7)
    np.testing.assert_allclose(head.D, D, rtol=1e-7)


def test_self_fit(rng):
    F = rng.standard_normal((3, 100)) + 1.0
    head = fit_head(F, F.copy())
    np.testing.assert_allclose(head.D, np.eye(3), atol=1e-7)
    np.testing.assert_allclose(head.c, 0.0, atol=1e-7)


def test_residual_orthogonal_to_features(rng):
    F = rng.standard_normal((4, 500)) + rng.standard_normal((4, 1))
    Y = rng.standard_normal((2, 500))
    head = fit_head(F, Y)
    Z = Y - head(F)
    assert np.abs(Z @ F.T / 500).max() < 1e-8
    assert np.abs(Z.mean(axis=1)).max() < 1e-8
    D, c = normal_equations_oracle(F, Y)
    np.testing.assert_allclose(head.D, D, atol=1e-7)
    np.testing.assert_allclose(head.c, c, atol=1e-7)


def test_refit_never_increases_mse(rng):
    for _ in range(10):
        F = rng.standard_normal((4, 200)) * 2 + 1
        Y = rng.standard_normal((3, 200))
        previous = HeadParams(rng.standard_normal((3, 4)), rng.standard_normal(3))
        assert head_mse(fit_head(F, Y), F, Y) <= head_mse(previous, F, Y) + 1e-12


def test_degenerate_features_do_not_crash(rng):
    F = np.ones((3, 50))
    Y = rng.standard_normal((2, 50))
    head = fit_head(F, Y)
    assert np.all(np.isfinite(head.D))


def test_zero_features_fit_the_label_mean(rng):
    Y = rng.standard_normal((2, 50))
    head = fit_head(np.zeros((3, 50)), Y)
    assert np.all(head.D == 0.0)
    np.testing.assert_allclose(head.c, Y.mean(axis=1), rtol=1e-12)


def test_non_finite_input():
    F = np.array([[1.0, np.nan]])
    with pytest.raises(NumericError):
        fit_head(F, np.ones((1, 2)))
