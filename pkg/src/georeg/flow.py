"""The evolving feature map as a replayable stack of closed-form layers.

Each layer moves every sample's features by

    f <- f + mu * Gamma(f) [V0 f + sum_k Vk f^k(x) + e]

where ``Gamma(f)`` scales elementwise by the activation derivative ``g'(f)``.
"""

from dataclasses import dataclass, field

import numpy as np

from . import toeplitz
from .linear_init import HeadParams


@dataclass(frozen=True)
class Activation:
    name: str
    id: int
    g: object = field(repr=False)
    dg: object = field(repr=False)
    # g(a + delta) - g(a) without cancellation
    increment: object = field(repr=False)


def _sigmoid(a):
    return 0.5 * (1.0 + np.tanh(0.5 * a))


def _dsigmoid(a):
    s = _sigmoid(a)
    return s * (1.0 - s)


def _tanh_increment(a, delta):
    return np.sinh(delta) / (np.cosh(a + delta) * np.cosh(a))


ACTIVATIONS = {
    "tanh": Activation("tanh", 0, np.tanh, lambda a: 1.0 - np.tanh(a) ** 2, _tanh_increment),
    "sigmoid": Activation("sigmoid", 1, _sigmoid, _dsigmoid,
                          lambda a, delta: 0.5 * _tanh_increment(0.5 * a, 0.5 * delta)),
    "identity": Activation("identity", 2, lambda a: np.asarray(a, dtype=np.float64) * 1.0,
                           lambda a: np.ones_like(a, dtype=np.float64),
                           lambda a, delta: np.asarray(delta, dtype=np.float64) * 1.0),
}
ACTIVATION_BY_ID = {a.id: a for a in ACTIVATIONS.values()}


def get_activation(act):
    if isinstance(act, Activation):
        return act
    try:
        return ACTIVATIONS[act]
    except KeyError:
        raise ValueError(f"unknown activation {act!r}; choose from {sorted(ACTIVATIONS)}") from None


def gamma_apply(act, f_vals, v):
    """``Gamma(f) v``: elementwise ``g'(f) * v`` (per sample when given matrices)."""
    f_vals, v = np.asarray(f_vals, dtype=np.float64), np.asarray(v, dtype=np.float64)
    if f_vals.shape != v.shape:
        raise ValueError(f"shape mismatch {f_vals.shape} vs {v.shape}")
    return get_activation(act).dg(f_vals) * v


def fixed_function_values(X, r):
    """Values of the fixed functions ``f^1..f^r``; only ``f^k(x) = x`` is supported."""
    return [X] * r


@dataclass
class LayerParams:
    """One trained layer.

    ``V0`` is a dense ``d x d`` matrix for plain layers and the kernel
    (length ``window**2``) of a convolution matrix over a ``grid`` for conv
    layers.  ``Vk`` holds one ``d x d_k`` matrix per fixed function.
    """

    kind: str
    V0: np.ndarray
    Vk: list
    e: np.ndarray
    mu: float = 0.0
    grid: tuple = (0, 0)
    window: int = 0

    @property
    def structure(self):
        return toeplitz.build_conv_structure(self.grid[0], self.grid[1], self.window)

    def dense_V0(self):
        if self.kind == "conv":
            return toeplitz.conv_matrix(self.V0, self.structure)
        return self.V0

    def linear_part(self, F, FK):
        """``V0 f + sum_k Vk f^k + e`` for every column."""
        if self.kind == "conv":
            out = toeplitz.conv_apply(self.V0, self.structure, F)
        else:
            out = self.V0 @ F
        for V, Fk in zip(self.Vk, FK):
            out += V @ Fk
        out += self.e[:, None]
        return out

    def direction(self, act, F, FK):
        return get_activation(act).dg(F) * self.linear_part(F, FK)

    def apply(self, act, F, FK):
        return F + self.mu * self.direction(act, F, FK)


@dataclass
class ModelState:
    U: np.ndarray
    head: HeadParams
    layers: list
    act: Activation
    r: int = 1

    @property
    def n(self):
        return self.U.shape[1]

    @property
    def d(self):
        return self.U.shape[0]

    @property
    def m(self):
        return self.head.D.shape[0]


def forward(model, X):
    """Features after replaying every layer; ``X`` is ``n x T`` or a single ``n``-vector."""
    X = np.asarray(X, dtype=np.float64)
    single = X.ndim == 1
    if single:
        X = X[:, None]
    FK = fixed_function_values(X, model.r)
    F = model.U @ X
    for layer in model.layers:
        F = layer.apply(model.act, F, FK)
    return F[:, 0] if single else F


def readout(model, X):
    F = forward(model, X)
    return model.head(F) if F.ndim == 2 else model.head(F[:, None])[:, 0]


def predict(model, X):
    """Class index: argmax of ``D f + c``, ties to the smallest index."""
    return np.argmax(readout(model, X), axis=0)


def resnet_step(W, b, act, f):
    """One modified residual block: ``g(W f + b) - g(f) + f``."""
    g = get_activation(act).g
    f = np.asarray(f, dtype=np.float64)
    return g(W @ f + b) - g(f) + f


def resnet_limit_error(act, Wbar, bbar, f, eps):
    """Distance between a near-identity residual block and one flow step of size ``eps``.

    Compares ``resnet_step(I + eps Wbar, eps bbar)`` with
    ``f + eps Gamma(f) [Wbar f + bbar]``; the gap is ``O(eps^2)`` for smooth ``g``.
    """
    act = get_activation(act)
    f = np.asarray(f, dtype=np.float64)
    # Both sides minus f: the block adds g(f + delta) - g(f) with
    # delta = (W - I) f + b = eps (Wbar f + bbar); the flow adds Gamma(f) delta.
    delta = eps * (np.asarray(Wbar) @ f + np.asarray(bbar))
    return float(np.linalg.norm(act.increment(f, delta) - act.dg(f) * delta))
