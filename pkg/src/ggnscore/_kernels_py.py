"""Pure-numpy twins of the compiled kernels in ``_kernels.pyx``.

Used when the extension is unavailable or when GGNSCORE_BACKEND=python.
Signatures and numerics must match the compiled versions exactly.
"""

import numpy as np
from scipy.special import expit


def silu(a):
    """x * sigmoid(x), elementwise."""
    arr = np.asarray(a, dtype=np.float64)
    return arr * expit(arr)


def silu_prime(a):
    """d/dx [x * sigmoid(x)] = s(x) * (1 + x * (1 - s(x)))."""
    arr = np.asarray(a, dtype=np.float64)
    s = expit(arr)
    return s * (1.0 + arr * (1.0 - s))


def relu(a):
    arr = np.asarray(a, dtype=np.float64)
    return np.where(arr > 0.0, arr, 0.0)


def relu_prime(a):
    """Subgradient choice: derivative 0 at the kink."""
    arr = np.asarray(a, dtype=np.float64)
    return np.where(arr > 0.0, 1.0, 0.0)


def pseudo_huber_value(theta, mu):
    """sum_i (sqrt(mu^2 + t_i^2) - mu), cancellation-free for |t| << mu."""
    t = np.asarray(theta, dtype=np.float64)
    r = np.sqrt(mu * mu + t * t)
    return float(np.sum(t * t / (r + mu)))


def pseudo_huber_grad(theta, mu):
    """t_i / sqrt(mu^2 + t_i^2), elementwise."""
    t = np.asarray(theta, dtype=np.float64)
    return t / np.sqrt(mu * mu + t * t)


def pseudo_huber_hess_diag(theta, mu):
    """mu^2 / (mu^2 + t_i^2)^{3/2}, elementwise; strictly positive."""
    t = np.asarray(theta, dtype=np.float64)
    r = np.sqrt(mu * mu + t * t)
    return mu * mu / (r * r * r)


def pseudo_huber_all(theta, mu):
    """Single pass returning (value, grad, hess_diag)."""
    t = np.asarray(theta, dtype=np.float64)
    r = np.sqrt(mu * mu + t * t)
    value = float(np.sum(t * t / (r + mu)))
    return value, t / r, mu * mu / (r * r * r)


def rowwise_outer(a, b):
    """out[t, j*k + q] = a[t, j] * b[t, q]; the Jacobian inner-weight block."""
    aa = np.asarray(a, dtype=np.float64)
    bb = np.asarray(b, dtype=np.float64)
    if aa.ndim != 2 or bb.ndim != 2 or aa.shape[0] != bb.shape[0]:
        raise ValueError("rowwise_outer expects 2-D inputs with equal row counts")
    return (aa[:, :, None] * bb[:, None, :]).reshape(aa.shape[0], -1)
