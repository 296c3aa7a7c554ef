"""Dimensionality reduction from the uncentered second moment, and the affine head."""

from dataclasses import dataclass

import numpy as np

from .data import CHUNK, empirical_expectation, empirical_moment

DEFAULT_RIDGE = 1e-8


class DimensionError(ValueError):
    pass


class NumericError(ArithmeticError):
    pass


@dataclass
class HeadParams:
    """Affine readout ``y ~ D f + c``."""

    D: np.ndarray
    c: np.ndarray

    def __call__(self, F):
        return self.D @ F + self.c[:, None]


def compute_pca_basis(X, d, chunk=CHUNK, workers=None):
    """Rows of the returned ``d x n`` matrix are the leading eigenvectors of ``E[x x^T]``.

    Eigenvalues are taken in descending order, ties keep the solver's index
    order, and each eigenvector is signed so its first nonzero coordinate is
    positive.
    """
    n = X.shape[0]
    if not 1 <= d <= n:
        raise DimensionError(f"need 1 <= d <= n, got d={d}, n={n}")
    M = empirical_moment(X, X, chunk, workers)
    M = 0.5 * (M + M.T)
    w, P = np.linalg.eigh(M)
    order = np.argsort(-w, kind="stable")[:d]
    U = P[:, order].T.copy()
    for row in U:
        nz = np.flatnonzero(np.abs(row) > 1e-12 * np.abs(row).max())
        if nz.size and row[nz[0]] < 0:
            row *= -1.0
    return U


def fit_head(F, Y, ridge=DEFAULT_RIDGE, chunk=CHUNK, workers=None):
    """Least-squares affine fit of ``Y`` on features ``F``.

    Solves the normal equations of ``min E||y - D f - c||^2`` over the
    moment matrix of ``(f, 1)``; a ridge of ``ridge * tr(E[f f^T]) / d`` is
    added to the feature block only (``ridge`` itself when the features are
    identically zero).  When ``E[f] = 0`` this reduces to
    ``D = E[y f^T] E[f f^T]^{-1}``, ``c = E[y] - D E[f]``.
    """
    if not (np.all(np.isfinite(F)) and np.all(np.isfinite(Y))):
        raise NumericError("non-finite values passed to fit_head")
    d = F.shape[0]
    Mff = empirical_moment(F, F, chunk, workers)
    Myf = empirical_moment(Y, F, chunk, workers)
    mf = empirical_expectation(F, chunk, workers)
    my = empirical_expectation(Y, chunk, workers)

    A = np.empty((d + 1, d + 1))
    A[:d, :d] = 0.5 * (Mff + Mff.T)
    A[:d, d] = mf
    A[d, :d] = mf
    A[d, d] = 1.0
    scale = np.trace(Mff) / d
    A[np.arange(d), np.arange(d)] += ridge * (scale if scale > 0 else 1.0)
    rhs = np.concatenate([Myf, my[:, None]], axis=1)
    try:
        sol = np.linalg.solve(A, rhs.T).T
    except np.linalg.LinAlgError as exc:
        raise NumericError(f"head normal equations are singular: {exc}") from None
    D, c = sol[:, :d].copy(), sol[:, d].copy()
    if not (np.all(np.isfinite(D)) and np.all(np.isfinite(c))):
        raise NumericError("head fit produced non-finite parameters")
    return HeadParams(D, c)


def head_mse(head, F, Y, chunk=CHUNK, workers=None):
    Z = Y - head(F)
    return float(empirical_expectation(np.sum(Z * Z, axis=0), chunk, workers)[0])
