"""Closed-form steepest-descent directions, momentum mixing and step sizes.

With residual ``z = y - D f - c`` and ``G = Gamma(f) D^T z`` per sample, the
direction parameters are the moments

    W0 = E[G f^T],   Wk = E[G (f^k)^T],   b = E[G].

Momentum mixes parameters (not directions): ``V <- alpha V + W`` and
``e <- beta e + b``, with no ``(1 - alpha)`` factor.
"""

from dataclasses import dataclass

import numpy as np

from . import toeplitz
from .data import CHUNK, empirical_expectation, empirical_moment, mean_inner, mean_sq_norm
from .flow import LayerParams, get_activation


class DegenerateDirection(ArithmeticError):
    """Line search along a direction with ``E||D psi||^2 = 0``."""


@dataclass
class DirectionParams:
    W0: np.ndarray
    Wk: list
    b: np.ndarray
    # "conv" when W0 holds a convolution kernel rather than a dense matrix
    kind: str = "plain"


@dataclass
class MomentumState:
    V0: np.ndarray
    Vk: list
    e: np.ndarray
    alpha: list
    beta: float

    @classmethod
    def zeros_like(cls, direction, alpha, beta):
        return cls(np.zeros_like(direction.W0), [np.zeros_like(W) for W in direction.Wk],
                   np.zeros_like(direction.b), list(alpha), beta)


def residual(Y, D, c, F):
    return Y - D @ F - c[:, None]


def gamma_backproject(act, F, Z, D):
    """Per-sample ``Gamma(f) D^T z``, shape ``d x T``."""
    return get_activation(act).dg(F) * (D.T @ Z)


def compute_direction(F, FK, Z, D, act, structure=None, normalize_conv=True,
                      chunk=CHUNK, workers=None):
    """Steepest-descent parameters at the current features.

    With a ``structure``, ``W0`` is replaced by the kernel of the unit-norm
    convolution matrix maximizing ``<W, E[G f^T]>`` (or of the plain
    projection when ``normalize_conv`` is False); the remaining parameters
    stay dense.

    Raises ``toeplitz.ZeroProjection`` when the convolution part vanishes.
    """
    if F.shape[1] != Z.shape[1] or D.shape != (Z.shape[0], F.shape[0]):
        raise ValueError(f"inconsistent shapes F{F.shape} Z{Z.shape} D{D.shape}")
    G = gamma_backproject(act, F, Z, D)
    Wk = [empirical_moment(G, Fk, chunk, workers) for Fk in FK]
    b = empirical_expectation(G, chunk, workers)
    if structure is None:
        return DirectionParams(empirical_moment(G, F, chunk, workers), Wk, b)
    kernel = toeplitz.conv_moment_kernel(G, F, structure, chunk)
    if normalize_conv:
        norm = toeplitz.conv_frobenius_norm(kernel, structure)
        if norm == 0.0:
            raise toeplitz.ZeroProjection("convolution part of the direction is zero")
        kernel = kernel / norm
    return DirectionParams(kernel, Wk, b, kind="conv")


def momentum_update(state, direction):
    """``V_k <- alpha_k V_k + W_k`` for k = 0..r and ``e <- beta e + b``."""
    a0, ak = state.alpha[0], state.alpha[1:]
    if len(ak) != len(direction.Wk):
        raise ValueError(f"{len(ak)} momentum coefficients for {len(direction.Wk)} fixed functions")
    return MomentumState(
        a0 * state.V0 + direction.W0,
        [a * V + W for a, V, W in zip(ak, state.Vk, direction.Wk)],
        state.beta * state.e + direction.b,
        list(state.alpha),
        state.beta,
    )


def layer_from_state(state, kind="plain", grid=(0, 0), window=0, mu=0.0):
    """Snapshot the momentum parameters as a layer (arrays are copied)."""
    return LayerParams(kind, state.V0.copy(), [V.copy() for V in state.Vk], state.e.copy(),
                       float(mu), tuple(grid), int(window))


def direction_vector(state, F, FK, act, kind="plain", grid=(0, 0), window=0):
    """Per-sample ``psi = Gamma(f) [V0 f + sum_k Vk f^k + e]``, shape ``d x T``."""
    return layer_from_state(state, kind, grid, window).direction(act, F, FK)


def line_search_step(Z, Dpsi, chunk=CHUNK, workers=None):
    """Exact minimizer of ``E||z - mu D psi||^2``: ``E[z^T D psi] / E[||D psi||^2]``."""
    denom = mean_sq_norm(Dpsi, chunk, workers)
    if not denom > 0.0:
        raise DegenerateDirection("E[||D psi||^2] = 0")
    return mean_inner(Z, Dpsi, chunk, workers) / denom


def mse(Z, chunk=CHUNK, workers=None):
    return mean_sq_norm(Z, chunk, workers)
