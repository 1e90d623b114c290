"""Biasless one-hidden-layer network: forward pass, Jacobian, squared loss.

Parameter layout is fixed everywhere: theta = (u row-major, then v row-major),
with u the (n, n0) inner weights and v the outer weights, shape (n,) for a
scalar head or (n, n_out) for independent output heads sharing u.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from . import backend

# Global supremum of the SiLU derivative is ~1.0998; 1.1 is the documented
# safe constant used in bound computations.
SILU_DERIV_SUP = 1.1

_ACTIVATIONS = {
    "silu": (backend.silu, backend.silu_prime),
    "relu": (backend.relu, backend.relu_prime),
}


def activation_pair(name):
    try:
        return _ACTIVATIONS[name]
    except KeyError:
        raise ValueError(f"unknown activation {name!r}; expected one of {sorted(_ACTIVATIONS)}")


@dataclass(frozen=True)
class NetworkConfig:
    n0: int
    n: int
    kappa: float
    activation: str = "silu"
    n_out: int = 1

    def __post_init__(self):
        if self.n0 < 1 or self.n < 1 or self.n_out < 1:
            raise ValueError("n0, n and n_out must be >= 1")
        if self.kappa <= 0:
            raise ValueError("kappa must be positive")
        activation_pair(self.activation)

    @classmethod
    def standard(cls, n0, n, activation="silu", n_out=1):
        """The usual 1/sqrt(n) output scaling."""
        return cls(n0=n0, n=n, kappa=1.0 / math.sqrt(n), activation=activation, n_out=n_out)

    @property
    def p(self):
        return self.n * self.n0 + self.n * self.n_out


@dataclass
class NetworkParams:
    u: np.ndarray
    v: np.ndarray

    def __post_init__(self):
        self.u = np.asarray(self.u, dtype=np.float64)
        self.v = np.asarray(self.v, dtype=np.float64)
        if self.u.ndim != 2:
            raise ValueError("u must be 2-D (n, n0)")
        if self.v.shape[0] != self.u.shape[0]:
            raise ValueError("u and v disagree on the hidden width")

    @property
    def p(self):
        return self.u.size + self.v.size

    @property
    def theta(self):
        """Flat view: all of u row-major, then v."""
        return np.concatenate([self.u.ravel(), self.v.ravel()])

    @classmethod
    def from_flat(cls, cfg, theta):
        theta = np.asarray(theta, dtype=np.float64)
        if theta.shape != (cfg.p,):
            raise ValueError(f"theta has length {theta.shape}, expected ({cfg.p},)")
        nu = cfg.n * cfg.n0
        u = theta[:nu].reshape(cfg.n, cfg.n0)
        if cfg.n_out == 1:
            v = theta[nu:].copy()
        else:
            v = theta[nu:].reshape(cfg.n, cfg.n_out)
        return cls(u=u.copy(), v=v)

    @classmethod
    def init_gaussian(cls, cfg, rng, scale=1.0):
        """Entrywise standard-normal init, optionally rescaled."""
        u = scale * rng.standard_normal((cfg.n, cfg.n0))
        if cfg.n_out == 1:
            v = scale * rng.standard_normal(cfg.n)
        else:
            v = scale * rng.standard_normal((cfg.n, cfg.n_out))
        return cls(u=u, v=v)

    def copy(self):
        return NetworkParams(u=self.u.copy(), v=self.v.copy())


@dataclass(frozen=True)
class LossBundle:
    """Squared loss value with its output-space derivatives.

    value = (1/m) sum_i 0.5 ||phi_i - y_i||^2, e = d value / d phi flattened
    row-major, output_hessian_scale the constant diagonal of the output
    Hessian. With scale_free=True the 1/m factor moves out of e and the
    Hessian scale (value is unchanged); the default keeps J^T e equal to the
    risk gradient.
    """

    value: float
    e: np.ndarray = field(repr=False)
    output_hessian_scale: float


def _check_inputs(cfg, params, X):
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[1] != cfg.n0:
        raise ValueError(f"X has shape {X.shape}, expected (m, {cfg.n0})")
    if params.u.shape != (cfg.n, cfg.n0):
        raise ValueError(f"u has shape {params.u.shape}, expected ({cfg.n}, {cfg.n0})")
    expected_v = (cfg.n,) if cfg.n_out == 1 else (cfg.n, cfg.n_out)
    if params.v.shape != expected_v:
        raise ValueError(f"v has shape {params.v.shape}, expected {expected_v}")
    return X


def forward(cfg, params, X):
    """Network outputs: kappa * sum_j v_j act(u_j . x); shape (m,) or (m, n_out)."""
    X = _check_inputs(cfg, params, X)
    act, _ = activation_pair(cfg.activation)
    Z = act(X @ params.u.T)
    return cfg.kappa * (Z @ params.v)


def preactivations(cfg, params, X):
    """Hidden pre-activations, entry (j, i) = u_j . x_i; shape (n, m)."""
    X = _check_inputs(cfg, params, X)
    return params.u @ X.T


def jacobian(cfg, params, X):
    """Output Jacobian wrt the flat theta; shape (m * n_out, p).

    Rows are sample-major: row i*n_out + c is d phi_c(x_i) / d theta, matching
    the row-major flattening of the (m, n_out) output matrix.
    """
    X = _check_inputs(cfg, params, X)
    act, act_prime = activation_pair(cfg.activation)
    m, n, k = X.shape[0], cfg.n, cfg.n_out
    A = X @ params.u.T
    Z = act(A)
    S = act_prime(A)
    if k == 1:
        coef = cfg.kappa * (S * params.v[None, :])
        Ju = backend.rowwise_outer(coef, X)
        Jv = cfg.kappa * Z
        return np.hstack([Ju, Jv])
    coef = cfg.kappa * (S[:, None, :] * params.v.T[None, :, :])
    Ju = backend.rowwise_outer(coef.reshape(m * k, n), np.repeat(X, k, axis=0))
    Jv = np.zeros((m, k, n, k))
    for c in range(k):
        Jv[:, c, :, c] = cfg.kappa * Z
    return np.hstack([Ju, Jv.reshape(m * k, n * k)])


def squared_loss(phi, y, scale_free=False):
    """Averaged squared loss (1/m) sum_i 0.5 ||phi_i - y_i||^2 and derivatives."""
    phi = np.asarray(phi, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if phi.shape != y.shape:
        raise ValueError(f"predictions {phi.shape} and targets {y.shape} differ")
    m = phi.shape[0]
    if m < 1:
        raise ValueError("need at least one sample")
    resid = (phi - y).ravel()
    value = 0.5 * float(resid @ resid) / m
    if scale_free:
        return LossBundle(value=value, e=resid, output_hessian_scale=1.0)
    return LossBundle(value=value, e=resid / m, output_hessian_scale=1.0 / m)


def lipschitz_J_bound(cfg, m, L_rho, L_v):
    """Jacobian Lipschitz-constant bound m * kappa * (1 + L_v) * L_rho * sqrt(2)."""
    if m < 1 or L_rho <= 0 or L_v < 0:
        raise ValueError("m >= 1, L_rho > 0 and L_v >= 0 required")
    return m * cfg.kappa * (1.0 + L_v) * L_rho * math.sqrt(2.0)
