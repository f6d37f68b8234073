"""Dense numerical kernels: matmul, activations, initialisation, dropout, RNG.

Dense matrices are plain 2-D ``numpy.ndarray`` objects. Training runs in
float32; every kernel is dtype-generic so the gradient checker can run the
exact same code in float64.

Randomness comes from :func:`make_rng`, which keys numpy's counter-based
Philox generator with ``(seed, stream)``. Each consumer (initialisation,
dropout, batch shuffling, synthetic data) draws from its own stream so that
adding random draws in one place never shifts another.
"""

import os

import numpy as np

from .errors import NonFiniteError, ParameterError, ShapeError

# Finiteness scan on public outputs; disable with SPARSE_GAT_CHECK_FINITE=0.
CHECK_FINITE = os.environ.get("SPARSE_GAT_CHECK_FINITE", "1") != "0"

STREAM_INIT = 0
STREAM_DROPOUT = 1
STREAM_SHUFFLE = 2
STREAM_DATA = 3

DEFAULT_DTYPE = np.float32


def scalar_sum(x):
    """Sum ``x`` in at least float64.

    Returns a Python float for float64-or-narrower input and a numpy scalar
    of the input type when it is wider, so extended-precision evaluations
    keep their extra digits.
    """
    x = np.asarray(x)
    acc = np.result_type(x.dtype, np.float64)
    total = x.astype(acc, copy=False).sum()
    return float(total) if acc == np.float64 else total


def make_rng(seed, stream=0):
    """Return a Philox generator keyed by the 64-bit ``seed`` and ``stream`` id."""
    key = np.array([seed & 0xFFFFFFFFFFFFFFFF, stream & 0xFFFFFFFFFFFFFFFF], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))


def check_finite(x, what="array"):
    if CHECK_FINITE and not np.all(np.isfinite(x)):
        raise NonFiniteError(f"non-finite values in {what}")
    return x


def matmul(a, b):
    """Dense product ``a @ b`` with shape and finiteness checks."""
    if a.ndim != 2 or b.ndim != 2:
        raise ShapeError(f"matmul expects 2-D operands, got {a.shape} and {b.shape}")
    if a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul dimension mismatch: {a.shape} x {b.shape}")
    return check_finite(a @ b, "matmul output")


def leaky_relu(x, slope=0.2):
    if not 0.0 < slope < 1.0:
        raise ParameterError(f"leaky slope must lie in (0, 1), got {slope}")
    return np.where(x >= 0, x, x * x.dtype.type(slope))


def leaky_relu_grad(x, slope=0.2):
    """Derivative of :func:`leaky_relu` w.r.t. its input (1 on x >= 0)."""
    return np.where(x >= 0, x.dtype.type(1), x.dtype.type(slope))


def elu(x):
    # expm1 of a clipped argument keeps the unused branch from overflowing
    return np.where(x >= 0, x, np.expm1(np.minimum(x, 0)))


def elu_grad(x):
    return np.where(x >= 0, x.dtype.type(1), np.exp(np.minimum(x, 0)))


def sigmoid(x):
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def glorot_init(rows, cols, rng, dtype=DEFAULT_DTYPE):
    """Uniform Glorot draw on ``[-s, s]`` with ``s = sqrt(6 / (rows + cols))``."""
    if rows < 1 or cols < 1:
        raise ShapeError(f"glorot_init needs positive dimensions, got {rows}x{cols}")
    limit = np.sqrt(6.0 / (rows + cols))
    return rng.uniform(-limit, limit, size=(rows, cols)).astype(dtype)


def dropout_mask(shape, p, rng, dtype=DEFAULT_DTYPE):
    """Inverted-dropout mask: 0 with probability ``p``, else ``1 / (1 - p)``."""
    if not 0.0 <= p < 1.0:
        raise ParameterError(f"dropout probability must lie in [0, 1), got {p}")
    if p == 0.0:
        return np.ones(shape, dtype=dtype)
    keep = rng.random(shape) >= p
    return keep.astype(dtype) * np.asarray(1.0 / (1.0 - p), dtype=dtype)
