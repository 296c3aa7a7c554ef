"""Binary checkpoint container.

Layout (integers little-endian u32, arrays little-endian float64 row-major)::

    b"GREG" | version | n | d | m | r | activation id | layer count
    U (d x n) | D (m x d) | c (m)
    per layer:
        kind byte (0 plain, 1 conv)
        plain: V0 (d x d)
        conv:  grid_rows | grid_cols | window | kernel (window**2)
        V1..Vr (d x n each) | e (d) | mu (1)
"""

import os
import struct
import tempfile
from pathlib import Path

import numpy as np

from .flow import ACTIVATION_BY_ID, LayerParams, ModelState
from .linear_init import HeadParams

MAGIC = b"GREG"
VERSION = 1
_KINDS = {"plain": 0, "conv": 1}
_KIND_NAMES = {v: k for k, v in _KINDS.items()}


class CheckpointError(ValueError):
    pass


def _f64(a):
    return np.ascontiguousarray(a, dtype="<f8").tobytes()


def encode_model(model):
    parts = [MAGIC, struct.pack("<7I", VERSION, model.n, model.d, model.m, model.r,
                                model.act.id, len(model.layers))]
    parts += [_f64(model.U), _f64(model.head.D), _f64(model.head.c)]
    for layer in model.layers:
        parts.append(struct.pack("<B", _KINDS[layer.kind]))
        if layer.kind == "conv":
            parts.append(struct.pack("<3I", layer.grid[0], layer.grid[1], layer.window))
        parts.append(_f64(layer.V0))
        parts += [_f64(V) for V in layer.Vk]
        parts += [_f64(layer.e), _f64([layer.mu])]
    return b"".join(parts)


class _Reader:
    def __init__(self, data):
        self.data, self.pos = data, 0

    def take(self, size):
        if self.pos + size > len(self.data):
            raise CheckpointError(f"checkpoint truncated at byte {self.pos}")
        chunk = self.data[self.pos:self.pos + size]
        self.pos += size
        return chunk

    def ints(self, fmt):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))

    def floats(self, *shape):
        count = int(np.prod(shape))
        return np.frombuffer(self.take(8 * count), dtype="<f8").astype(np.float64).reshape(shape)


def decode_model(data):
    rd = _Reader(data)
    if rd.take(4) != MAGIC:
        raise CheckpointError("bad magic: not a checkpoint file")
    version, n, d, m, r, act_id, count = rd.ints("<7I")
    if version != VERSION:
        raise CheckpointError(f"unsupported checkpoint version {version}")
    if act_id not in ACTIVATION_BY_ID:
        raise CheckpointError(f"unknown activation id {act_id}")
    U, D, c = rd.floats(d, n), rd.floats(m, d), rd.floats(m)
    layers = []
    for _ in range(count):
        (kind_id,) = rd.ints("<B")
        if kind_id not in _KIND_NAMES:
            raise CheckpointError(f"unknown layer kind {kind_id}")
        kind, grid, window = _KIND_NAMES[kind_id], (0, 0), 0
        if kind == "conv":
            rows, cols, window = rd.ints("<3I")
            grid = (rows, cols)
            V0 = rd.floats(window * window)
        else:
            V0 = rd.floats(d, d)
        Vk = [rd.floats(d, n) for _ in range(r)]
        e = rd.floats(d)
        (mu,) = rd.floats(1)
        layers.append(LayerParams(kind, V0, Vk, e, float(mu), grid, window))
    if rd.pos != len(data):
        raise CheckpointError(f"{len(data) - rd.pos} trailing bytes after last layer")
    return ModelState(U, HeadParams(D, c), layers, ACTIVATION_BY_ID[act_id], r)


def save_checkpoint(model, path):
    """Write atomically: a temp file in the target directory, then rename."""
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent or ".", prefix=path.name, suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(encode_model(model))
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def load_checkpoint(path):
    return decode_model(Path(path).read_bytes())
