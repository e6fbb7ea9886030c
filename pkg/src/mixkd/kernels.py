"""Hot numeric kernels with optional numba acceleration.

Every kernel exists in two variants: a pure-numpy implementation
(``*_np``) and a numba ``@njit`` loop version (``*_nb``).  The active
variant is chosen at import time: numba is used when it is importable,
unless the environment variable ``MIXKD_PURE_NUMPY=1`` forces the numpy
path.  Both variants compute the same formulas; ``benchmarks/kernel_bench.py``
compares their throughput.

All kernels take and return contiguous float64 arrays and are shape-dumb:
callers reshape to 2-D (rows x features) before dispatching.
"""

from __future__ import annotations

import math
import os

import numpy as np

# tanh-form GELU constant
_GELU_C = 0.044715
_SQRT_2_OVER_PI = math.sqrt(2.0 / math.pi)

PURE_NUMPY_ENV = "MIXKD_PURE_NUMPY"


def _numba_requested() -> bool:
    return os.environ.get(PURE_NUMPY_ENV, "0") != "1"


try:
    from numba import njit

    _HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    _HAVE_NUMBA = False

USING_NUMBA = _HAVE_NUMBA and _numba_requested()


# ---------------------------------------------------------------------------
# numpy reference implementations
# ---------------------------------------------------------------------------

def gelu_forward_np(x: np.ndarray) -> np.ndarray:
    u = _SQRT_2_OVER_PI * (x + _GELU_C * x * x * x)
    return 0.5 * x * (1.0 + np.tanh(u))


def gelu_backward_np(x: np.ndarray, grad_out: np.ndarray) -> np.ndarray:
    u = _SQRT_2_OVER_PI * (x + _GELU_C * x * x * x)
    t = np.tanh(u)
    du = _SQRT_2_OVER_PI * (1.0 + 3.0 * _GELU_C * x * x)
    local = 0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * du
    return grad_out * local


def softmax_rows_np(x: np.ndarray) -> np.ndarray:
    shifted = x - x.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


def layernorm_rows_np(x: np.ndarray, gain: np.ndarray, bias: np.ndarray,
                      eps: float) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Returns (out, mean, inv_std); the stats are reused by the backward pass."""
    mean = x.mean(axis=1, keepdims=True)
    var = ((x - mean) ** 2).mean(axis=1, keepdims=True)
    inv_std = 1.0 / np.sqrt(var + eps)
    out = (x - mean) * inv_std * gain + bias
    return out, mean, inv_std


# ---------------------------------------------------------------------------
# numba loop implementations
# ---------------------------------------------------------------------------

if _HAVE_NUMBA:

    @njit(cache=True)
    def gelu_forward_nb(x):
        flat = x.ravel()
        out = np.empty_like(flat)
        for i in range(flat.size):
            v = flat[i]
            u = _SQRT_2_OVER_PI * (v + _GELU_C * v * v * v)
            out[i] = 0.5 * v * (1.0 + math.tanh(u))
        return out.reshape(x.shape)

    @njit(cache=True)
    def gelu_backward_nb(x, grad_out):
        xf = x.ravel()
        gf = grad_out.ravel()
        out = np.empty_like(xf)
        for i in range(xf.size):
            v = xf[i]
            u = _SQRT_2_OVER_PI * (v + _GELU_C * v * v * v)
            t = math.tanh(u)
            du = _SQRT_2_OVER_PI * (1.0 + 3.0 * _GELU_C * v * v)
            out[i] = gf[i] * (0.5 * (1.0 + t) + 0.5 * v * (1.0 - t * t) * du)
        return out.reshape(x.shape)

    @njit(cache=True)
    def softmax_rows_nb(x):
        n, k = x.shape
        out = np.empty_like(x)
        for i in range(n):
            m = x[i, 0]
            for j in range(1, k):
                if x[i, j] > m:
                    m = x[i, j]
            s = 0.0
            for j in range(k):
                e = math.exp(x[i, j] - m)
                out[i, j] = e
                s += e
            for j in range(k):
                out[i, j] /= s
        return out

    @njit(cache=True)
    def layernorm_rows_nb(x, gain, bias, eps):
        n, k = x.shape
        out = np.empty_like(x)
        mean = np.empty((n, 1))
        inv_std = np.empty((n, 1))
        for i in range(n):
            m = 0.0
            for j in range(k):
                m += x[i, j]
            m /= k
            v = 0.0
            for j in range(k):
                d = x[i, j] - m
                v += d * d
            v /= k
            istd = 1.0 / math.sqrt(v + eps)
            mean[i, 0] = m
            inv_std[i, 0] = istd
            for j in range(k):
                out[i, j] = (x[i, j] - m) * istd * gain[j] + bias[j]
        return out, mean, inv_std

else:  # pragma: no cover
    gelu_forward_nb = None
    gelu_backward_nb = None
    softmax_rows_nb = None
    layernorm_rows_nb = None


if USING_NUMBA:
    gelu_forward = gelu_forward_nb
    gelu_backward = gelu_backward_nb
    softmax_rows = softmax_rows_nb
    layernorm_rows = layernorm_rows_nb
else:
    gelu_forward = gelu_forward_np
    gelu_backward = gelu_backward_np
    softmax_rows = softmax_rows_np
    layernorm_rows = layernorm_rows_np
