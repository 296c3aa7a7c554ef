"""IDX parsing, the empirical dataset, and deterministic blocked expectations.

Every expectation in the package is an empirical mean over the columns of a
``k x T`` matrix.  Means are accumulated over fixed chunks of ``CHUNK``
columns; the per-chunk partial sums are then combined in chunk-index order,
so the result does not depend on how many workers computed the chunks.
"""

import gzip
import struct
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

IMAGE_MAGIC = 0x00000803
LABEL_MAGIC = 0x00000801
CHUNK = 4096


class IdxFormatError(ValueError):
    """Bad magic number or malformed IDX header."""


class IdxLengthError(ValueError):
    """IDX payload shorter or longer than its header declares."""


class LabelRangeError(ValueError):
    """A label value falls outside ``[0, m)``."""


class EmptyDatasetError(ValueError):
    """An expectation was requested over zero samples."""


def _read_header(data, magic, ndim):
    if len(data) < 4 + 4 * ndim:
        raise IdxLengthError(f"IDX header needs {4 + 4 * ndim} bytes, got {len(data)}")
    (found,) = struct.unpack(">I", data[:4])
    if found != magic:
        raise IdxFormatError(f"expected magic 0x{magic:08x}, found 0x{found:08x}")
    dims = struct.unpack(">" + "I" * ndim, data[4:4 + 4 * ndim])
    payload = data[4 + 4 * ndim:]
    expected = int(np.prod(dims, dtype=np.int64))
    if len(payload) != expected:
        raise IdxLengthError(f"IDX payload has {len(payload)} bytes, header declares {expected}")
    return dims, payload


def parse_idx_images(data):
    """Parse an IDX3 ubyte image file into an ``n x T`` matrix in ``[0, 1]``.

    Column ``t`` is image ``t`` flattened row-major and divided by 255.
    """
    (count, rows, cols), payload = _read_header(data, IMAGE_MAGIC, 3)
    pixels = np.frombuffer(payload, dtype=np.uint8).reshape(count, rows * cols)
    # Fortran order keeps each sample (column) contiguous for chunked reductions.
    return np.asfortranarray(pixels.T, dtype=np.float64) / 255.0


def parse_idx_label_values(data):
    """Parse an IDX1 ubyte label file into an integer vector of length T."""
    (_count,), payload = _read_header(data, LABEL_MAGIC, 1)
    return np.frombuffer(payload, dtype=np.uint8).astype(np.int64)


def one_hot(labels, m):
    labels = np.asarray(labels, dtype=np.int64)
    if labels.size and (labels.min() < 0 or labels.max() >= m):
        bad = labels[(labels < 0) | (labels >= m)][0]
        raise LabelRangeError(f"label {bad} outside [0, {m})")
    Y = np.zeros((m, labels.size), dtype=np.float64, order="F")
    Y[labels, np.arange(labels.size)] = 1.0
    return Y


def parse_idx_labels(data, m=10):
    """Parse an IDX1 label file into an ``m x T`` one-hot matrix."""
    return one_hot(parse_idx_label_values(data), m)


def encode_idx_images(images):
    """Serialize a ``T x R x C`` uint8 array as IDX3 bytes."""
    images = np.asarray(images, dtype=np.uint8)
    count, rows, cols = images.shape
    return struct.pack(">IIII", IMAGE_MAGIC, count, rows, cols) + images.tobytes()


def encode_idx_labels(labels):
    labels = np.asarray(labels, dtype=np.uint8)
    return struct.pack(">II", LABEL_MAGIC, labels.size) + labels.tobytes()


def read_bytes(path):
    path = Path(path)
    if path.suffix == ".gz":
        with gzip.open(path, "rb") as fh:
            return fh.read()
    return path.read_bytes()


@dataclass
class Dataset:
    """Empirical distribution of ``(x, y)``: ``X`` is ``n x T``, ``Y`` is ``m x T`` one-hot."""

    X: np.ndarray
    Y: np.ndarray

    def __post_init__(self):
        if self.X.ndim != 2 or self.Y.ndim != 2 or self.X.shape[1] != self.Y.shape[1]:
            raise ValueError(f"inconsistent shapes X{self.X.shape} Y{self.Y.shape}")

    @property
    def n(self):
        return self.X.shape[0]

    @property
    def m(self):
        return self.Y.shape[0]

    @property
    def T(self):
        return self.X.shape[1]

    @property
    def labels(self):
        return np.argmax(self.Y, axis=0)

    def head(self, count):
        """The first ``count`` samples (the whole set if ``count`` is None)."""
        if count is None or count >= self.T:
            return self
        return Dataset(np.asfortranarray(self.X[:, :count]), np.asfortranarray(self.Y[:, :count]))

    def validate(self):
        if min(self.n, self.m, self.T) <= 0:
            raise EmptyDatasetError("dataset has an empty dimension")
        if self.X.min() < 0.0 or self.X.max() > 1.0:
            raise ValueError("pixel values outside [0, 1]")
        if not (np.all((self.Y == 0) | (self.Y == 1)) and np.all(self.Y.sum(axis=0) == 1)):
            raise ValueError("Y columns are not one-hot")


def load_idx_dataset(images_path, labels_path, m=10, limit=None):
    X = parse_idx_images(read_bytes(images_path))
    Y = parse_idx_labels(read_bytes(labels_path), m)
    if X.shape[1] != Y.shape[1]:
        raise IdxFormatError(f"{X.shape[1]} images but {Y.shape[1]} labels")
    return Dataset(X, Y).head(limit)


def _chunk_bounds(T, chunk):
    return [(s, min(s + chunk, T)) for s in range(0, T, chunk)]


def _reduce(partial, T, chunk, workers):
    if T == 0:
        raise EmptyDatasetError("expectation over zero samples")
    bounds = _chunk_bounds(T, chunk)
    if workers and workers > 1 and len(bounds) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(lambda b: partial(*b), bounds))
    else:
        parts = [partial(s, e) for s, e in bounds]
    total = parts[0].copy()
    for part in parts[1:]:
        total += part
    return total / T


def empirical_expectation(values, chunk=CHUNK, workers=None):
    """Row-wise mean of a ``k x T`` matrix using the fixed blocked order."""
    values = np.asarray(values, dtype=np.float64)
    if values.ndim == 1:
        values = values[None, :]
    return _reduce(lambda s, e: values[:, s:e].sum(axis=1), values.shape[1], chunk, workers)


def empirical_moment(A, B, chunk=CHUNK, workers=None):
    """``E[a b^T]`` for column samples of ``A`` (``p x T``) and ``B`` (``q x T``)."""
    if A.shape[1] != B.shape[1]:
        raise ValueError(f"sample counts differ: {A.shape[1]} vs {B.shape[1]}")
    return _reduce(lambda s, e: A[:, s:e] @ B[:, s:e].T, A.shape[1], chunk, workers)


def mean_sq_norm(A, chunk=CHUNK, workers=None):
    """``E[||a||^2]`` over the columns of ``A``."""
    return float(empirical_expectation(np.sum(A * A, axis=0), chunk, workers)[0])


def mean_inner(A, B, chunk=CHUNK, workers=None):
    """``E[a^T b]`` over paired columns."""
    return float(empirical_expectation(np.sum(A * B, axis=0), chunk, workers)[0])
