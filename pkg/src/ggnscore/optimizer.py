"""Curvature-damped Gauss-Newton updates and the training loop.

The update comes in two algebraically identical forms: a direct p x p solve
and a low-rank form that only factors an (m+1) x (m+1) system, which is the
cheap path whenever the model is overparameterized (p >> m). The adaptive
learning rate divides a base rate by 1 + step_constant * eta, with eta the
dual local norm of the regularizer gradient.
"""

import math
import time
import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla

from . import dynamics, metrics, regularizer
from .model import NetworkParams, forward, jacobian, preactivations, squared_loss
from .numerics import singular_extremes
from .runlog import RunLog, RunRow


class DivergenceError(RuntimeError):
    def __init__(self, iteration, detail=""):
        self.iteration = iteration
        msg = f"divergence detected at iteration {iteration}"
        super().__init__(msg + (f": {detail}" if detail else ""))


@dataclass
class GgnWorkspace:
    """Per-step quantities of the augmented Gauss-Newton system.

    The last row of J_hat is the regularizer gradient, the last entry of
    e_hat is 1 and the last entry of q_hat_diag is 0; J_hat^T e_hat then
    equals the full objective gradient under the gradient-consistent loss
    convention.
    """

    J: np.ndarray = field(repr=False)
    J_hat: np.ndarray = field(repr=False)
    e_hat: np.ndarray = field(repr=False)
    q_hat_diag: np.ndarray = field(repr=False)
    h_diag: np.ndarray = field(repr=False)
    alpha: float | None = None
    eta: float | None = None


@dataclass(frozen=True)
class StepReport:
    delta: np.ndarray = field(repr=False)
    alpha: float
    eta: float | None
    new_loss: float
    wall_time: float


@dataclass
class TrainSchedule:
    """Batch/step budget and method knobs for one training run."""

    batch_size: int | None = None      # None = full batch
    steps: int | None = None
    epochs: int | None = None
    alpha_bar: float = 0.95
    gd_lr: float = 1.0
    gd_include_reg: bool = False
    scale_free: bool = False
    step_form: str = "woodbury"        # or "direct"
    # "remark": pair the rate with tau * M_g (the admissible-tau inequality
    # form; default). "dikin": pair it with the scale-correct constant of the
    # tau-scaled regularizer, which actually keeps the metric term below 1.
    step_rule: str = "remark"
    diag_every: int = 1                # 0 disables the dynamics monitors
    eval_every: int | None = None      # None = follow diag_every, 0 = never
    divergence_factor: float = 1e6
    ti_probe_max: int | None = None

    def resolve_steps(self, m, batch):
        if self.steps is not None:
            return int(self.steps)
        if self.epochs is not None:
            return int(self.epochs) * (m // batch)
        raise ValueError("schedule needs steps or epochs")


def augment(J, e, q_scale, grad_g):
    """Append the regularizer row: J_hat = [J; grad_g^T], e_hat = [e; 1],
    q_hat = [q_scale, ..., q_scale, 0]."""
    J = np.asarray(J, dtype=np.float64)
    e = np.asarray(e, dtype=np.float64)
    grad_g = np.asarray(grad_g, dtype=np.float64)
    if J.ndim != 2 or e.ndim != 1 or J.shape[0] != e.shape[0]:
        raise ValueError(f"J {J.shape} and e {e.shape} are inconsistent")
    if grad_g.shape != (J.shape[1],):
        raise ValueError(f"grad_g has shape {grad_g.shape}, expected ({J.shape[1]},)")
    J_hat = np.vstack([J, grad_g[None, :]])
    e_hat = np.append(e, 1.0)
    q_hat = np.full(J.shape[0] + 1, float(q_scale))
    q_hat[-1] = 0.0
    return J_hat, e_hat, q_hat


def ggn_step_direct(ws):
    """delta = -alpha (J_hat^T Q_hat J_hat + H)^-1 J_hat^T e_hat via a p x p SPD solve."""
    from .numerics import solve_spd

    M = (ws.J_hat.T * ws.q_hat_diag) @ ws.J_hat
    M[np.diag_indices_from(M)] += ws.h_diag
    rhs = ws.J_hat.T @ ws.e_hat
    return -ws.alpha * solve_spd(M, rhs)


def ggn_step_woodbury(ws):
    """delta = -alpha H^-1 J_hat^T (I + Q_hat J_hat H^-1 J_hat^T)^-1 e_hat.

    H^-1 is applied diagonally; the inner matrix is nonsymmetric in general
    and goes through a plain LU solve.
    """
    r, p = ws.J_hat.shape
    if r > p:
        warnings.warn("augmented row count exceeds parameter count; the direct form is cheaper")
    JH = ws.J_hat / ws.h_diag[None, :]
    S = ws.J_hat @ JH.T
    K = np.eye(r) + ws.q_hat_diag[:, None] * S
    try:
        w = sla.solve(K, ws.e_hat, check_finite=False)
    except np.linalg.LinAlgError as err:
        raise RuntimeError(f"inner {r}x{r} solve failed: {err}") from err
    return -ws.alpha * (JH.T @ w)


_STEP_FORMS = {"woodbury": ggn_step_woodbury, "direct": ggn_step_direct}


def learning_rate(alpha_bar, M_eff, eta):
    """alpha = alpha_bar / (1 + M_eff * eta), always in (0, alpha_bar]."""
    if not 0.0 < alpha_bar <= 1.0:
        raise ValueError(f"alpha_bar must lie in (0, 1], got {alpha_bar}")
    if M_eff < 0 or eta < 0:
        raise ValueError("M_eff and eta must be nonnegative")
    return alpha_bar / (1.0 + M_eff * eta)


def gd_step(J, e, grad_g=None, lr=1.0):
    """Plain gradient step -lr * J^T e, optionally adding the regularizer pull."""
    J = np.asarray(J, dtype=np.float64)
    e = np.asarray(e, dtype=np.float64)
    if J.shape[0] != e.shape[0]:
        raise ValueError(f"J {J.shape} and e {e.shape} are inconsistent")
    g = J.T @ e
    if grad_g is not None:
        g = g + grad_g
    return -lr * g


def single_step(cfg, params, X, y, reg, alpha_bar=0.95, scale_free=False,
                step_form="woodbury", alpha_override=None):
    """One full optimizer step from the given parameters; returns the step
    report plus the workspace it was computed from."""
    phi = forward(cfg, params, X)
    lb = squared_loss(phi, y, scale_free=scale_free)
    J = jacobian(cfg, params, X)
    theta = params.theta
    gval, grad_g, h = regularizer.value_grad_hess(reg, theta)
    eta = math.sqrt(float(np.sum(grad_g * grad_g / h)))
    alpha = alpha_override if alpha_override is not None else learning_rate(
        alpha_bar, reg.step_constant, eta)
    J_hat, e_hat, q_hat = augment(J, lb.e, lb.output_hessian_scale, grad_g)
    ws = GgnWorkspace(J=J, J_hat=J_hat, e_hat=e_hat, q_hat_diag=q_hat,
                      h_diag=h, alpha=alpha, eta=eta)
    t0 = time.perf_counter()
    delta = _STEP_FORMS[step_form](ws)
    wall = time.perf_counter() - t0
    new_params = NetworkParams.from_flat(cfg, theta + delta)
    new_lb = squared_loss(forward(cfg, new_params, X), y, scale_free=scale_free)
    return StepReport(delta=delta, alpha=alpha, eta=eta, new_loss=new_lb.value,
                      wall_time=wall), ws


def _normalize_method(method):
    key = method.lower().replace("_", "-")
    if key in ("ggn-score", "ggnscore", "ggn"):
        return "ggn-score"
    if key == "gd":
        return "gd"
    raise ValueError(f"unknown method {method!r}; expected GGN-SCORE or GD")


def _params_view(cfg, flat):
    nu = cfg.n * cfg.n0
    u = flat[:nu].reshape(cfg.n, cfg.n0)
    v = flat[nu:] if cfg.n_out == 1 else flat[nu:].reshape(cfg.n, cfg.n_out)
    return NetworkParams(u=u, v=v)


def train(cfg, params, data, reg, method, schedule, seed):
    """Run one training loop; deterministic for a fixed seed.

    Mini-batches are drawn by shuffling indices once per epoch with the
    seeded generator (without replacement; a trailing partial batch is
    dropped). Wall time in the log covers the optimizer step only; the
    dynamics monitors and test evaluations are timed separately.
    """
    method = _normalize_method(method)
    if method == "ggn-score" and reg is None:
        raise ValueError("GGN-SCORE requires a regularizer")
    rng = np.random.default_rng(seed)
    diag_rng = np.random.default_rng(seed + 0x5EED)

    X = np.asarray(data.X_train, dtype=np.float64)
    Y = np.asarray(data.y_train, dtype=np.float64)
    has_test = data.X_test is not None
    classification = getattr(data, "n_classes", None) is not None

    flat = params.theta
    prm = _params_view(cfg, flat)
    m_total = X.shape[0]
    batch = min(schedule.batch_size or m_total, m_total)
    full_batch = batch == m_total
    steps = schedule.resolve_steps(m_total, batch)
    diag_every = schedule.diag_every
    eval_every = schedule.eval_every if schedule.eval_every is not None else diag_every

    # T-I probe: the test inputs when present, truncated if asked
    probe = data.X_test if has_test else X
    if schedule.ti_probe_max is not None:
        probe = probe[: schedule.ti_probe_max]
    ti_start = metrics.ti_snapshot(preactivations(cfg, prm, probe))

    def evaluate_test():
        if not has_test:
            return None, None
        phi = forward(cfg, prm, data.X_test)
        loss = squared_loss(phi, data.y_test, scale_free=schedule.scale_free).value
        acc = metrics.accuracy(phi, data.y_test) if classification else None
        return loss, acc

    phi_full = forward(cfg, prm, X)
    lb0 = squared_loss(phi_full, Y, scale_free=schedule.scale_free)
    reg_val0 = regularizer.value(reg, flat) if reg is not None else 0.0
    test_loss0, acc0 = evaluate_test() if eval_every else (None, None)
    log = RunLog(method=method, seed=seed)
    log.rows.append(RunRow(
        iteration=0, elapsed_s=0.0, train_loss=lb0.value, test_loss=test_loss0,
        nnz=metrics.count_zeros(flat), accuracy=acc0,
        objective=lb0.value + reg_val0, reg_value=reg_val0,
    ))
    divergence_bar = schedule.divergence_factor * max(lb0.value, 1e-12)

    # running regularity extremes over the trajectory
    run_beta = run_beta1 = run_BR = run_Bphi = 0.0
    run_beta_m = run_dg = math.inf
    run_Dg = 0.0
    q_scale_seen = 1.0

    if method == "ggn-score":
        M_eff = reg.step_constant if schedule.step_rule == "remark" else reg.metric_constant
    order = np.arange(m_total)
    if not full_batch:
        order = rng.permutation(m_total)
    pos = 0
    elapsed = 0.0
    phi_prev_coord = 1.0  # base-case seed for the augmented-row reciprocal

    for t in range(1, steps + 1):
        do_diag = diag_every > 0 and (t % diag_every == 0 or t == steps)
        do_eval = eval_every > 0 and (t % eval_every == 0 or t == steps)
        if pos + batch > m_total:
            pos = 0
            if not full_batch:
                order = rng.permutation(m_total)
        idx = order[pos:pos + batch]
        pos += batch
        Xb, Yb = X[idx], Y[idx]

        t0 = time.perf_counter()
        phi_b = forward(cfg, prm, Xb)
        lb = squared_loss(phi_b, Yb, scale_free=schedule.scale_free)
        if not math.isfinite(lb.value) or lb.value > divergence_bar:
            raise DivergenceError(t, f"loss {lb.value:.6g}")
        J = jacobian(cfg, prm, Xb)
        if method == "ggn-score":
            gval, grad_g, h = regularizer.value_grad_hess(reg, flat)
            eta = math.sqrt(float(np.sum(grad_g * grad_g / h)))
            alpha = learning_rate(schedule.alpha_bar, M_eff, eta)
            J_hat, e_hat, q_hat = augment(J, lb.e, lb.output_hessian_scale, grad_g)
            ws = GgnWorkspace(J=J, J_hat=J_hat, e_hat=e_hat, q_hat_diag=q_hat,
                              h_diag=h, alpha=alpha, eta=eta)
            delta = _STEP_FORMS[schedule.step_form](ws)
        else:
            grad_g = None
            if reg is not None and schedule.gd_include_reg:
                grad_g = regularizer.gradient(reg, flat)
            alpha, eta, gval = schedule.gd_lr, None, None
            delta = gd_step(J, lb.e, grad_g, lr=schedule.gd_lr)
        if not np.all(np.isfinite(delta)):
            raise DivergenceError(t, "non-finite step")
        theta_before = flat.copy() if (do_diag and method == "ggn-score") else None
        flat += delta
        elapsed += time.perf_counter() - t0

        row = RunRow(
            iteration=t, elapsed_s=elapsed, train_loss=lb.value,
            alpha=alpha, eta=eta,
            step_norm=float(np.linalg.norm(delta)),
            nnz=metrics.count_zeros(flat),
            objective=(lb.value + gval) if gval is not None else None,
            reg_value=gval,
        )

        d0 = time.perf_counter()
        if do_diag and method == "ggn-score":
            report = dynamics.gtilde(J, J_hat, q_hat, h, e_hat, phi_prev_coord)
            row.phi_degenerate = report.degenerate
            row.g22_pos, row.g11_pd = dynamics.positivity_checks(report.G_tilde, rng=diag_rng)
            row.p1_frob, row.p1_block = dynamics.p1_conditions(
                report.G_tilde, M_eff, eta, phi_b.ravel(), Yb.ravel())
            smax, smin = singular_extremes(J_hat)
            run_beta = max(run_beta, float(np.linalg.norm(e_hat)))
            run_beta1 = max(run_beta1, smax)
            run_beta_m = min(run_beta_m, smin)
            run_dg = min(run_dg, float(h.min()))
            run_Dg = max(run_Dg, float(h.max()))
            run_BR = max(run_BR, float(np.linalg.norm(lb.e)))
            q_scale_seen = lb.output_hessian_scale
            snap = dynamics.TrajectorySnapshot(
                theta=theta_before, phi=phi_b.ravel().copy() if full_batch else None,
                e_norm=float(np.linalg.norm(lb.e)), e_hat_norm=float(np.linalg.norm(e_hat)),
                sigma_max=smax, sigma_min=smin,
                h_min=float(h.min()), h_max=float(h.max()))
            prev = log.snapshots[-1] if log.snapshots else None
            if prev is not None and prev.phi is not None and snap.phi is not None \
                    and prev.phi.shape == snap.phi.shape:
                dtheta = float(np.linalg.norm(snap.theta - prev.theta))
                if dtheta > 0:
                    run_Bphi = max(run_Bphi, float(np.linalg.norm(snap.phi - prev.phi)) / dtheta)
            log.snapshots.append(snap)
            est = dynamics.RegularityEstimates(
                beta=run_beta, beta1=run_beta1, beta_m=run_beta_m,
                d_g=run_dg, D_g=run_Dg, d_q=0.0, D_q=q_scale_seen,
                B_R=run_BR, D_R=q_scale_seen, gamma_R=q_scale_seen,
                B_phi=run_Bphi, B_g=reg.tau * math.sqrt(reg.p))
            d_metric = regularizer.d_nu(reg, theta_before, flat, h)
            lb_after = squared_loss(forward(cfg, prm, Xb), Yb, scale_free=schedule.scale_free)
            obj_after = lb_after.value + regularizer.value(reg, flat)
            p2 = dynamics.p2_descent_check(lb.value + gval, obj_after, alpha, est, reg.nu, d_metric)
            row.p2_ok, row.ld_bound = p2.ok, p2.ld_bound
            row.d_nu, row.d_nu_lt_1 = d_metric, p2.d_lt_1
        if do_eval:
            row.test_loss, row.accuracy = evaluate_test()
        row.diag_s = time.perf_counter() - d0
        if method == "ggn-score":
            phi_prev_coord = -delta[-1] / alpha
        log.rows.append(row)

    phi_full = forward(cfg, prm, X)
    lb_final = squared_loss(phi_full, Y, scale_free=schedule.scale_free)
    reg_final = regularizer.value(reg, flat) if reg is not None else 0.0
    test_loss, acc = evaluate_test()
    ti_final = preactivations(cfg, prm, probe)
    log.summary = {
        "method": method,
        "seed": seed,
        "steps": steps,
        "batch_size": batch,
        "final_train_loss": lb_final.value,
        "final_objective": lb_final.value + reg_final,
        "final_test_loss": test_loss,
        "final_accuracy": acc,
        "ti_plain": metrics.ti_measure(ti_start, ti_final, include_zeros=False),
        "ti_incl_zeros": metrics.ti_measure(ti_start, ti_final, include_zeros=True),
        "nnz": metrics.count_zeros(flat),
        "total_step_s": elapsed,
        "total_diag_s": sum(r.diag_s for r in log.rows),
        "assumption_a_violated": cfg.activation == "relu",
    }
    log.final_theta = flat.copy()
    return log
