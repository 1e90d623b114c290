"""Function-space dynamics monitors.

Everything here is read-only instrumentation of optimizer state: the NTK Gram
matrix, the augmented evolution matrices that govern the discrete-time output
dynamics, positivity checks on their blocks, the two descent conditions of
the convergence analysis, and empirical regularity-constant estimates.
"""

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla

from . import regularizer
from .numerics import frobenius_norm

EPS_PHI = 1e-12


@dataclass(frozen=True)
class GramReport:
    """NTK Gram matrix plus the augmented evolution matrices at one step."""

    G: np.ndarray = field(repr=False)
    G_hat: np.ndarray = field(repr=False)
    G_tilde: np.ndarray = field(repr=False)
    phi_cur: float
    degenerate: bool

    @property
    def g11(self):
        return self.G_tilde[:-1, :-1]

    @property
    def g12(self):
        return self.G_tilde[:-1, -1]

    @property
    def g21(self):
        return self.G_tilde[-1, :-1]

    @property
    def g22(self):
        return float(self.G_tilde[-1, -1])


@dataclass(frozen=True)
class RegularityEstimates:
    """Empirical bounds over a trajectory; estimates, not certified constants."""

    beta: float        # max ||e_hat||
    beta1: float       # max sigma_max(J_hat)
    beta_m: float      # min sigma_min(J_hat)
    d_g: float         # min Hessian diagonal
    D_g: float         # max Hessian diagonal
    d_q: float         # min augmented output-Hessian diagonal (0 by construction)
    D_q: float         # max augmented output-Hessian diagonal
    B_R: float         # max ||grad_phi risk||
    D_R: float         # output-Hessian operator-norm bound
    gamma_R: float     # strong-convexity constant of the risk
    B_phi: float       # empirical output Lipschitz estimate
    B_g: float         # gradient bound of the regularizer (tau * sqrt(p))

    @property
    def xi(self):
        return self.B_R * self.B_phi + self.B_g

    @property
    def vartheta(self):
        return self.B_phi ** 2 * (self.gamma_R - self.D_R)


@dataclass
class TrajectorySnapshot:
    theta: np.ndarray = field(repr=False)
    phi: np.ndarray | None = field(repr=False)
    e_norm: float
    e_hat_norm: float
    sigma_max: float
    sigma_min: float
    h_min: float
    h_max: float


@dataclass(frozen=True)
class P2Report:
    ok: bool
    ld_bound: float
    varpi: float
    d_lt_1: bool


def ntk_gram(J):
    """G = J J^T, the kernel Gram matrix of output gradients."""
    J = np.asarray(J, dtype=np.float64)
    return J @ J.T


def _inner_system(J_hat, q_hat_diag, h_diag):
    """S = J_hat H^-1 J_hat^T and K = I + diag(q_hat) S."""
    J_hat = np.asarray(J_hat, dtype=np.float64)
    JH = J_hat / np.asarray(h_diag, dtype=np.float64)[None, :]
    S = J_hat @ JH.T
    K = np.eye(J_hat.shape[0]) + np.asarray(q_hat_diag, dtype=np.float64)[:, None] * S
    return JH, S, K


def ghat(J, J_hat, q_hat_diag, h_diag):
    """J H^-1 J_hat^T (I + Q_hat J_hat H^-1 J_hat^T)^-1, shape (m, m+1)."""
    J = np.asarray(J, dtype=np.float64)
    JH, _, K = _inner_system(J_hat, q_hat_diag, h_diag)
    T = J @ JH.T
    # T @ K^-1 via the transposed system
    return sla.solve(K.T, T.T, check_finite=False).T


def gtilde(J, J_hat, q_hat_diag, h_diag, e_hat, phi_prev, eps_phi=EPS_PHI):
    """Augmented (m+1)x(m+1) evolution matrix and the next augmentation seed.

    The appended row of J is zero except its final coordinate 1/phi_prev;
    phi_cur is the last coordinate of the raw step vector
    H^-1 J_hat^T (I + Q_hat J_hat H^-1 J_hat^T)^-1 e_hat, to be fed back as
    phi_prev on the next call. |phi_prev| <= eps_phi zeroes the appended row
    and flags the report degenerate instead of raising.
    """
    J = np.asarray(J, dtype=np.float64)
    h_diag = np.asarray(h_diag, dtype=np.float64)
    JH, _, K = _inner_system(J_hat, q_hat_diag, h_diag)
    T = J @ JH.T
    row_p = JH[:, -1]  # last row of H^-1 J_hat^T, length m+1
    G_hat = sla.solve(K.T, T.T, check_finite=False).T
    last_base = sla.solve(K.T, row_p, check_finite=False)
    phi_cur = float(row_p @ sla.solve(K, np.asarray(e_hat, dtype=np.float64), check_finite=False))
    degenerate = abs(phi_prev) <= eps_phi
    if degenerate:
        last_row = np.zeros(K.shape[0])
    else:
        last_row = last_base / phi_prev
    G_tilde = np.vstack([G_hat, last_row[None, :]])
    G = ntk_gram(J)
    return GramReport(G=G, G_hat=G_hat, G_tilde=G_tilde, phi_cur=phi_cur, degenerate=degenerate)


def binv_gram(V, J_hat, q_hat_diag, h_diag):
    """V B^-1 V^T for the damped curvature matrix B = J_hat^T Q_hat J_hat + H.

    Computed through the low-rank identity, so only an (m+1) x (m+1) system
    is factored. With V = [J; phi_tilde e_p^T] this is the both-sides
    augmented evolution matrix: its leading block equals the one from
    ``gtilde`` and its corner is phi_tilde^2 (B^-1)_pp, the quantity the
    block-positivity argument actually controls (the one-sided corner from
    ``gtilde`` is sign-indefinite and is only recorded as a diagnostic).
    """
    V = np.asarray(V, dtype=np.float64)
    JH, _, K = _inner_system(J_hat, q_hat_diag, h_diag)
    VH = V / np.asarray(h_diag, dtype=np.float64)[None, :]
    C = JH @ V.T                      # J_hat H^-1 V^T, (m+1) x k
    q = np.asarray(q_hat_diag, dtype=np.float64)
    return VH @ V.T - C.T @ sla.solve(K, q[:, None] * C, check_finite=False)


def augmented_rows(J, phi_tilde):
    """J with one appended row of zeros except a final coordinate phi_tilde."""
    J = np.asarray(J, dtype=np.float64)
    row = np.zeros((1, J.shape[1]))
    row[0, -1] = phi_tilde
    return np.vstack([J, row])


def positivity_checks(G_tilde, rng=None, n_probes=20):
    """(g22 > 0, g11 positive definite in the quadratic-form sense).

    The leading block is nonsymmetric in general, so positive-definiteness is
    assessed through its symmetric part's spectrum plus random quadratic
    forms; degeneracy is reported, never raised.
    """
    G_tilde = np.asarray(G_tilde, dtype=np.float64)
    g22_positive = bool(G_tilde[-1, -1] > 0.0)
    g11 = G_tilde[:-1, :-1]
    sym = 0.5 * (g11 + g11.T)
    lam_min = float(np.linalg.eigvalsh(sym)[0])
    g11_pd = lam_min > -1e-8
    if g11_pd:
        rng = rng or np.random.default_rng(0)
        for _ in range(n_probes):
            x = rng.standard_normal(g11.shape[0])
            if float(x @ g11 @ x) <= 0.0:
                g11_pd = False
                break
    return g22_positive, g11_pd


def p1_conditions(G_tilde, M_eff, eta, phi_t, phi_star):
    """The two first-property conditions, evaluated as booleans.

    phi_t and phi_star are the current outputs and the target outputs on the
    same inputs (length m, the leading block size of G_tilde).
    """
    G_tilde = np.asarray(G_tilde, dtype=np.float64)
    diff = np.asarray(phi_t, dtype=np.float64).ravel() - np.asarray(phi_star, dtype=np.float64).ravel()
    if diff.shape[0] != G_tilde.shape[0] - 1:
        raise ValueError(
            f"output difference has length {diff.shape[0]}, expected {G_tilde.shape[0] - 1}"
        )
    frob_ok = bool(1.0 + M_eff * eta <= frobenius_norm(G_tilde))
    cross = G_tilde[-1, :-1] + G_tilde[:-1, -1]
    block_ok = bool(abs(G_tilde[-1, -1]) >= abs(float(cross @ diff)))
    return frob_ok, block_ok


def step_norm_bound(alpha, beta, sigma_max, sigma_min, d_g, D_g, d_q):
    """L_D = alpha * beta * sigma_max * D_g / (d_g * (D_g + d_q * sigma_min^2))."""
    return alpha * beta * sigma_max * D_g / (d_g * (D_g + d_q * sigma_min ** 2))


def p2_descent_check(prev_loss, new_loss, alpha, est, nu, d):
    """Evaluate the per-step descent bound with empirical constants.

    Requires the metric term d < 1; when that fails the omega terms are
    undefined, so the report carries varpi = nan and ok = False with the
    d_lt_1 flag recording the precondition.
    """
    ld = step_norm_bound(alpha, est.beta, est.beta1, est.beta_m, est.d_g, est.D_g, est.d_q)
    if not d < 1.0:
        return P2Report(ok=False, ld_bound=ld, varpi=math.nan, d_lt_1=False)
    varpi = regularizer.omega_nu(nu, d) - regularizer.omega_nu(nu, -d)
    drop = est.vartheta * ld ** 2 * (1.0 + est.D_g * varpi) - est.xi * ld
    ok = bool(new_loss <= prev_loss - drop)
    return P2Report(ok=ok, ld_bound=ld, varpi=varpi, d_lt_1=True)


def estimate_regularity(snapshots, q_scale, reg=None):
    """Running extremes over trajectory snapshots.

    B_phi is the largest ||phi_i - phi_j|| / ||theta_i - theta_j|| over
    consecutive snapshot pairs that carry outputs on common inputs; it is an
    estimate, not a certified constant. gamma_R = D_R = q_scale holds for the
    squared loss by construction.
    """
    if not snapshots:
        raise ValueError("need at least one snapshot")
    beta = max(s.e_hat_norm for s in snapshots)
    beta1 = max(s.sigma_max for s in snapshots)
    beta_m = min(s.sigma_min for s in snapshots)
    d_g = min(s.h_min for s in snapshots)
    D_g = max(s.h_max for s in snapshots)
    B_R = max(s.e_norm for s in snapshots)
    B_phi = 0.0
    for a, b in zip(snapshots, snapshots[1:]):
        if a.phi is None or b.phi is None or a.phi.shape != b.phi.shape:
            continue
        dtheta = float(np.linalg.norm(b.theta - a.theta))
        if dtheta == 0.0:
            continue
        B_phi = max(B_phi, float(np.linalg.norm(b.phi - a.phi)) / dtheta)
    B_g = reg.tau * math.sqrt(reg.p) if reg is not None else 0.0
    return RegularityEstimates(
        beta=beta, beta1=beta1, beta_m=beta_m, d_g=d_g, D_g=D_g,
        d_q=0.0, D_q=q_scale, B_R=B_R, D_R=q_scale, gamma_R=q_scale,
        B_phi=B_phi, B_g=B_g,
    )
