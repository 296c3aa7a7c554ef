"""2-D convolution (doubly-block-Toeplitz) matrices over a feature grid.

A feature vector of length ``d = rows * cols`` is read as a row-major grid.
A ``window x window`` kernel ``k`` defines the matrix ``W`` with

    W[p, q] = k[o]   whenever q = p + o for an in-window offset o,

and zero elsewhere (zero padding, no wrap-around).  These matrices form a
linear subspace of ``R^{d x d}``; the orthogonal projection onto it averages
``W`` over each offset class.
"""

from dataclasses import dataclass, field

import numpy as np

from .data import CHUNK


class ParameterError(ValueError):
    pass


class ZeroProjection(ArithmeticError):
    """The projection onto convolution matrices vanished, so it cannot be normalized."""


@dataclass
class ConvStructure:
    grid_rows: int
    grid_cols: int
    window: int
    offsets: list = field(repr=False)
    index_map: list = field(repr=False)

    @property
    def d(self):
        return self.grid_rows * self.grid_cols

    @property
    def counts(self):
        return np.array([rows.size for rows, _ in self.index_map], dtype=np.float64)


_STRUCTURES = {}


def build_conv_structure(grid_rows, grid_cols, window):
    """Enumerate, per offset ``(dr, dc)``, the matrix positions ``(p, p + (dr, dc))``.

    Offsets run row-major over ``dr, dc in [-h, h]`` with ``h = window // 2``,
    so kernel index ``(dr + h) * window + (dc + h)``.
    """
    key = (grid_rows, grid_cols, window)
    if key in _STRUCTURES:
        return _STRUCTURES[key]
    if window < 1 or window % 2 == 0:
        raise ParameterError(f"window must be a positive odd number, got {window}")
    if grid_rows < 1 or grid_cols < 1:
        raise ParameterError(f"bad grid {grid_rows}x{grid_cols}")
    h = window // 2
    r, c = np.divmod(np.arange(grid_rows * grid_cols), grid_cols)
    offsets, index_map = [], []
    for dr in range(-h, h + 1):
        for dc in range(-h, h + 1):
            ok = (r + dr >= 0) & (r + dr < grid_rows) & (c + dc >= 0) & (c + dc < grid_cols)
            p = np.flatnonzero(ok)
            q = (r[ok] + dr) * grid_cols + (c[ok] + dc)
            offsets.append((dr, dc))
            index_map.append((p, q))
    s = ConvStructure(grid_rows, grid_cols, window, offsets, index_map)
    _STRUCTURES[key] = s
    return s


def square_structure(d, window):
    side = int(round(np.sqrt(d)))
    if side * side != d:
        raise ParameterError(f"convolution layers need a square feature grid, d={d}")
    return build_conv_structure(side, side, window)


def conv_matrix(kernel, s):
    W = np.zeros((s.d, s.d))
    for k, (p, q) in zip(kernel, s.index_map):
        W[p, q] = k
    return W


def conv_frobenius_norm(kernel, s):
    return float(np.sqrt(np.sum(s.counts * np.asarray(kernel) ** 2)))


def project_kernel(W, s):
    """Kernel of the orthogonal projection ``P(W)``: the mean of ``W`` over each offset class."""
    if W.shape != (s.d, s.d):
        raise ParameterError(f"matrix shape {W.shape} does not match grid d={s.d}")
    kernel = np.zeros(len(s.offsets))
    for o, (p, q) in enumerate(s.index_map):
        if p.size:
            kernel[o] = W[p, q].mean()
    return kernel


def project_to_conv(W, s, normalize=True):
    """Return ``(kernel of P(W), Wconv)``.

    ``Wconv = P(W) / ||P(W)||_F`` maximizes ``<V, W>`` over unit-norm
    convolution matrices ``V``; with ``normalize=False`` it is ``P(W)`` itself.
    """
    kernel = project_kernel(W, s)
    P = conv_matrix(kernel, s)
    if not normalize:
        return kernel, P
    norm = np.linalg.norm(P)
    if norm == 0.0:
        raise ZeroProjection("projection onto convolution matrices is zero")
    return kernel, P / norm


def _grid(A, s):
    return A.reshape(s.grid_rows, s.grid_cols, A.shape[1])


def _shift_slices(n, delta):
    # Target index range [lo, hi) and its source range shifted by delta.
    lo, hi = max(0, -delta), min(n, n - delta)
    return slice(lo, hi), slice(lo + delta, hi + delta)


def conv_apply(kernel, s, F):
    """``conv_matrix(kernel, s) @ F`` for a ``d x T`` matrix, by shifted accumulation."""
    out = np.zeros((s.grid_rows, s.grid_cols, F.shape[1]))
    grid = _grid(np.ascontiguousarray(F), s)
    for k, (dr, dc) in zip(kernel, s.offsets):
        if k == 0.0:
            continue
        tr, sr = _shift_slices(s.grid_rows, dr)
        tc, sc = _shift_slices(s.grid_cols, dc)
        out[tr, tc] += k * grid[sr, sc]
    return out.reshape(s.d, F.shape[1])


def conv_moment_kernel(G, F, s, chunk=CHUNK):
    """Kernel of ``P(E[g f^T])`` computed without forming the dense ``d x d`` moment.

    Per offset class ``o`` this is ``E[sum_p g_p f_{p+o}] / |o|``; column
    chunks are accumulated in index order.
    """
    T = G.shape[1]
    Gg, Fg = _grid(np.ascontiguousarray(G), s), _grid(np.ascontiguousarray(F), s)
    totals = np.zeros(len(s.offsets))
    for start in range(0, T, chunk):
        cols = slice(start, min(start + chunk, T))
        for o, (dr, dc) in enumerate(s.offsets):
            tr, sr = _shift_slices(s.grid_rows, dr)
            tc, sc = _shift_slices(s.grid_cols, dc)
            totals[o] += np.einsum("ijk,ijk->", Gg[tr, tc, cols], Fg[sr, sc, cols])
    counts = s.counts
    return np.divide(totals / T, counts, out=np.zeros_like(totals), where=counts > 0)
