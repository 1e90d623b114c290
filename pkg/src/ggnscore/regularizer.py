"""Smoothed-L1 regularizer with generalized self-concordant (GSC) calculus.

g(theta) = tau * sum_i (sqrt(mu^2 + theta_i^2) - mu), a smooth approximation
of tau*||theta||_1 with smoothing parameter mu. The Hessian is diagonal and
strictly positive, which is what makes the low-rank optimizer step cheap.

Three constants live on the regularizer and are easy to conflate:
  * ``M_g``            -- the GSC constant of the smoothing family,
                          2 * mu^(nu/2-2) * p^((3-nu)/2) (= 2 mu^-0.7 p^0.2
                          at the default order nu=2.6).
  * ``step_constant``  -- tau * M_g, the factor paired with the dual local
                          norm in the adaptive learning rate and in the
                          admissible-tau rule.
  * ``metric_constant``-- tau^(1-nu/2) * M_g, the constant of the tau-scaled
                          g itself; using it in the metric term keeps the
                          second-order sandwich bounds scale-invariant in tau.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from . import backend
from .numerics import singular_extremes

OMEGA_SERIES_THRESHOLD = 1e-4


class NoAdmissibleTauError(ValueError):
    pass


@dataclass(frozen=True)
class GscRegularizer:
    tau: float
    mu: float
    p: int
    nu: float = 2.6
    # Penalty restricted to the outer-weight block; the Hessian keeps its
    # positive diagonal everywhere so the curvature-damped step stays
    # well-posed (curvature-only damping on the inactive block).
    v_block_only: bool = False
    v_block_start: int = 0

    def __post_init__(self):
        if self.tau <= 0 or self.mu <= 0:
            raise ValueError("tau and mu must be positive")
        if not 2.0 <= self.nu <= 3.0:
            raise ValueError("nu must lie in [2, 3]")
        if self.p < 1:
            raise ValueError("p must be >= 1")
        if self.v_block_only and not 0 <= self.v_block_start < self.p:
            raise ValueError("v_block_start out of range")

    @property
    def M_g(self):
        return 2.0 * self.mu ** (self.nu / 2.0 - 2.0) * self.p ** ((3.0 - self.nu) / 2.0)

    @property
    def step_constant(self):
        return self.tau * self.M_g

    @property
    def metric_constant(self):
        return self.tau ** (1.0 - self.nu / 2.0) * self.M_g


@dataclass(frozen=True)
class LocalGeometry:
    """Dual local norm of the regularizer gradient plus the Hessian diagonal."""

    eta: float
    h_diag: np.ndarray = field(repr=False)


def _check_theta(reg, theta):
    theta = np.asarray(theta, dtype=np.float64)
    if theta.shape != (reg.p,):
        raise ValueError(f"theta has shape {theta.shape}, expected ({reg.p},)")
    return theta


def value(reg, theta):
    theta = _check_theta(reg, theta)
    if reg.v_block_only:
        theta = theta[reg.v_block_start:]
    return reg.tau * backend.pseudo_huber_value(theta, reg.mu)


def gradient(reg, theta):
    theta = _check_theta(reg, theta)
    g = reg.tau * backend.pseudo_huber_grad(theta, reg.mu)
    if reg.v_block_only:
        g[: reg.v_block_start] = 0.0
    return g


def hessian_diag(reg, theta):
    theta = _check_theta(reg, theta)
    return reg.tau * backend.pseudo_huber_hess_diag(theta, reg.mu)


def value_grad_hess(reg, theta):
    """Fused (value, gradient, hessian_diag); one pass over theta."""
    theta = _check_theta(reg, theta)
    val, g, h = backend.pseudo_huber_all(theta, reg.mu)
    g = reg.tau * g
    h = reg.tau * h
    if reg.v_block_only:
        inactive = theta[: reg.v_block_start]
        val -= backend.pseudo_huber_value(inactive, reg.mu)
        g[: reg.v_block_start] = 0.0
    return reg.tau * val, g, h


def dual_local_norm(reg, theta):
    """eta = ||grad g||_theta^* under the diagonal Hessian metric."""
    theta = _check_theta(reg, theta)
    g = gradient(reg, theta)
    h = hessian_diag(reg, theta)
    eta = math.sqrt(float(np.sum(g * g / h)))
    return LocalGeometry(eta=eta, h_diag=h)


def omega_nu(nu, r):
    """The order-dependent univariate bound function; omega_nu(0) = 1/2.

    Branches for nu in {2, 3, 4} plus the generic order; a 4-term Taylor
    series replaces the closed form for |r| < 1e-4 where every branch
    cancels catastrophically.
    """
    r = float(r)
    if nu != 2.0 and r >= 1.0:
        raise ValueError(f"omega_nu undefined for r >= 1 at order nu={nu} (got r={r})")
    if abs(r) < OMEGA_SERIES_THRESHOLD:
        return _omega_series(nu, r)
    if nu == 2.0:
        return (math.exp(r) - r - 1.0) / (r * r)
    if nu == 3.0:
        return (-r - math.log1p(-r)) / (r * r)
    if nu == 4.0:
        return ((1.0 - r) * math.log1p(-r) + r) / (r * r)
    E = 2.0 * (3.0 - nu) / (2.0 - nu)
    A = (nu - 2.0) / (4.0 - nu)
    c = (nu - 2.0) / (2.0 * (3.0 - nu))
    return A / r * (c / r * ((1.0 - r) ** E - 1.0) - 1.0)


def _omega_series(nu, r):
    if nu == 2.0:
        coeffs = (0.5, 1.0 / 6.0, 1.0 / 24.0, 1.0 / 120.0)
    elif nu == 3.0:
        coeffs = (0.5, 1.0 / 3.0, 1.0 / 4.0, 1.0 / 5.0)
    elif nu == 4.0:
        coeffs = (0.5, 1.0 / 6.0, 1.0 / 12.0, 1.0 / 20.0)
    else:
        E = 2.0 * (3.0 - nu) / (2.0 - nu)
        A = (nu - 2.0) / (4.0 - nu)
        c0 = -A * (E - 1.0) / 2.0
        c1 = A * (E - 1.0) * (E - 2.0) / 6.0
        c2 = -A * (E - 1.0) * (E - 2.0) * (E - 3.0) / 24.0
        c3 = A * (E - 1.0) * (E - 2.0) * (E - 3.0) * (E - 4.0) / 120.0
        coeffs = (c0, c1, c2, c3)
    return coeffs[0] + r * (coeffs[1] + r * (coeffs[2] + r * coeffs[3]))


def scaled_metric(nu, constant, theta_bar, theta_tilde, h_diag):
    """The order-nu metric term between two points, with an explicit constant."""
    delta = np.asarray(theta_tilde, dtype=np.float64) - np.asarray(theta_bar, dtype=np.float64)
    euclid = float(np.linalg.norm(delta))
    if euclid == 0.0:
        return 0.0
    if nu == 2.0:
        return constant * euclid
    local = math.sqrt(float(np.sum(np.asarray(h_diag) * delta * delta)))
    return (nu / 2.0 - 1.0) * constant * euclid ** (3.0 - nu) * local ** (nu - 2.0)


def d_nu(reg, theta_bar, theta_tilde, h_diag=None):
    """Metric term of the tau-scaled regularizer between two iterates."""
    theta_bar = _check_theta(reg, theta_bar)
    theta_tilde = _check_theta(reg, theta_tilde)
    if h_diag is None:
        h_diag = hessian_diag(reg, theta_bar)
    return scaled_metric(reg.nu, reg.metric_constant, theta_bar, theta_tilde, h_diag)


def suggest_tau(M_gbar, eta0, gtilde0):
    """Largest tau with 1 + tau*M_gbar*eta0 <= sqrt(k * lambda_1(G~' G~)).

    M_gbar and eta0 belong to the unscaled regularizer (tau = 1), which is
    what keeps the inequality linear in tau. eta0 = 0 returns +inf (any
    strength is admissible); a right-hand side below 1 admits no tau at all.
    """
    if eta0 < 0 or M_gbar <= 0:
        raise ValueError("need eta0 >= 0 and M_gbar > 0")
    gtilde0 = np.asarray(gtilde0, dtype=np.float64)
    k = gtilde0.shape[0]
    smax, _ = singular_extremes(gtilde0)
    rhs = math.sqrt(k) * smax
    if eta0 == 0.0:
        return math.inf
    if rhs < 1.0:
        raise NoAdmissibleTauError(
            f"no admissible tau: sqrt({k} * lambda_1) = {rhs:.6g} < 1"
        )
    return (rhs - 1.0) / (M_gbar * eta0)
