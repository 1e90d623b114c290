# cython: boundscheck=False, wraparound=False, cdivision=True
"""Fused elementwise kernels for the training hot loop.

Each function has a drop-in twin in ``_kernels_py``; the active backend is
chosen at import time in ``backend``.
"""

from libc.math cimport exp, sqrt

import numpy as np

cimport numpy as cnp

cnp.import_array()


def silu(a):
    """x * sigmoid(x), elementwise."""
    arr = np.ascontiguousarray(a, dtype=np.float64)
    out = np.empty_like(arr)
    _silu(arr.ravel(), out.ravel())
    return out


def silu_prime(a):
    """d/dx [x * sigmoid(x)] = s(x) * (1 + x * (1 - s(x)))."""
    arr = np.ascontiguousarray(a, dtype=np.float64)
    out = np.empty_like(arr)
    _silu_prime(arr.ravel(), out.ravel())
    return out


def relu(a):
    arr = np.ascontiguousarray(a, dtype=np.float64)
    out = np.empty_like(arr)
    _relu(arr.ravel(), out.ravel())
    return out


def relu_prime(a):
    """Subgradient choice: derivative 0 at the kink."""
    arr = np.ascontiguousarray(a, dtype=np.float64)
    out = np.empty_like(arr)
    _relu_prime(arr.ravel(), out.ravel())
    return out


def pseudo_huber_value(theta, double mu):
    """sum_i (sqrt(mu^2 + t_i^2) - mu), cancellation-free for |t| << mu."""
    arr = np.ascontiguousarray(theta, dtype=np.float64)
    return _ph_value(arr.ravel(), mu)


def pseudo_huber_grad(theta, double mu):
    """t_i / sqrt(mu^2 + t_i^2), elementwise."""
    arr = np.ascontiguousarray(theta, dtype=np.float64)
    out = np.empty_like(arr)
    _ph_grad(arr.ravel(), mu, out.ravel())
    return out


def pseudo_huber_hess_diag(theta, double mu):
    """mu^2 / (mu^2 + t_i^2)^{3/2}, elementwise; strictly positive."""
    arr = np.ascontiguousarray(theta, dtype=np.float64)
    out = np.empty_like(arr)
    _ph_hess(arr.ravel(), mu, out.ravel())
    return out


def pseudo_huber_all(theta, double mu):
    """Single pass returning (value, grad, hess_diag)."""
    arr = np.ascontiguousarray(theta, dtype=np.float64)
    grad = np.empty_like(arr)
    hess = np.empty_like(arr)
    val = _ph_all(arr.ravel(), mu, grad.ravel(), hess.ravel())
    return val, grad, hess


def rowwise_outer(a, b):
    """out[t, j*k + q] = a[t, j] * b[t, q]; the Jacobian inner-weight block."""
    aa = np.ascontiguousarray(a, dtype=np.float64)
    bb = np.ascontiguousarray(b, dtype=np.float64)
    if aa.ndim != 2 or bb.ndim != 2 or aa.shape[0] != bb.shape[0]:
        raise ValueError("rowwise_outer expects 2-D inputs with equal row counts")
    out = np.empty((aa.shape[0], aa.shape[1] * bb.shape[1]), dtype=np.float64)
    _rowwise_outer(aa, bb, out)
    return out


cdef void _silu(const double[::1] x, double[::1] out) nogil:
    cdef Py_ssize_t i, n = x.shape[0]
    cdef double s
    for i in range(n):
        s = 1.0 / (1.0 + exp(-x[i]))
        out[i] = x[i] * s


cdef void _silu_prime(const double[::1] x, double[::1] out) nogil:
    cdef Py_ssize_t i, n = x.shape[0]
    cdef double s
    for i in range(n):
        s = 1.0 / (1.0 + exp(-x[i]))
        out[i] = s * (1.0 + x[i] * (1.0 - s))


cdef void _relu(const double[::1] x, double[::1] out) nogil:
    cdef Py_ssize_t i, n = x.shape[0]
    for i in range(n):
        out[i] = x[i] if x[i] > 0.0 else 0.0


cdef void _relu_prime(const double[::1] x, double[::1] out) nogil:
    cdef Py_ssize_t i, n = x.shape[0]
    for i in range(n):
        out[i] = 1.0 if x[i] > 0.0 else 0.0


cdef double _ph_value(const double[::1] t, double mu) nogil:
    cdef Py_ssize_t i, n = t.shape[0]
    cdef double acc = 0.0, r
    for i in range(n):
        r = sqrt(mu * mu + t[i] * t[i])
        acc += t[i] * t[i] / (r + mu)
    return acc


cdef void _ph_grad(const double[::1] t, double mu, double[::1] out) nogil:
    cdef Py_ssize_t i, n = t.shape[0]
    for i in range(n):
        out[i] = t[i] / sqrt(mu * mu + t[i] * t[i])


cdef void _ph_hess(const double[::1] t, double mu, double[::1] out) nogil:
    cdef Py_ssize_t i, n = t.shape[0]
    cdef double r
    for i in range(n):
        r = sqrt(mu * mu + t[i] * t[i])
        out[i] = mu * mu / (r * r * r)


cdef double _ph_all(const double[::1] t, double mu,
                    double[::1] grad, double[::1] hess) nogil:
    cdef Py_ssize_t i, n = t.shape[0]
    cdef double acc = 0.0, r
    for i in range(n):
        r = sqrt(mu * mu + t[i] * t[i])
        acc += t[i] * t[i] / (r + mu)
        grad[i] = t[i] / r
        hess[i] = mu * mu / (r * r * r)
    return acc


cdef void _rowwise_outer(const double[:, ::1] a, const double[:, ::1] b,
                         double[:, ::1] out) nogil:
    cdef Py_ssize_t t, j, q
    cdef Py_ssize_t r = a.shape[0], n = a.shape[1], k = b.shape[1]
    cdef double aj
    for t in range(r):
        for j in range(n):
            aj = a[t, j]
            for q in range(k):
                out[t, j * k + q] = aj * b[t, q]
