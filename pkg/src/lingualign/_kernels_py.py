"""Pure-numpy kernel implementations.

Fallback used when the compiled extension is unavailable (or forced via
LINGUALIGN_BACKEND=python). Signatures mirror lingualign._kernels exactly;
all arrays are float64 and C-contiguous.
"""

import numpy as np

BACKEND_NAME = "python"

# tanh-approximation GeLU constants
_GELU_C = 0.7978845608028654  # sqrt(2/pi)
_GELU_A = 0.044715


def matmul(a, b):
    return a @ b


def silu(x):
    s = 1.0 / (1.0 + np.exp(-x))
    return x * s


def silu_grad(x):
    s = 1.0 / (1.0 + np.exp(-x))
    return s * (1.0 + x * (1.0 - s))


def gelu(x):
    inner = _GELU_C * (x + _GELU_A * x * x * x)
    return 0.5 * x * (1.0 + np.tanh(inner))


def gelu_grad(x):
    inner = _GELU_C * (x + _GELU_A * x * x * x)
    t = np.tanh(inner)
    sech2 = 1.0 - t * t
    d_inner = _GELU_C * (1.0 + 3.0 * _GELU_A * x * x)
    return 0.5 * (1.0 + t) + 0.5 * x * sech2 * d_inner


def softmax_rows(x):
    shifted = x - x.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)
