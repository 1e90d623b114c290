import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ggnscore import regularizer as R
from ggnscore.numerics import solve_spd


def make_reg(tau=1.0, mu=1.0, p=1, **kw):
    return R.GscRegularizer(tau=tau, mu=mu, p=p, **kw)


class TestValue:
    def test_zero(self):
        assert R.value(make_reg(), np.zeros(1)) == 0.0

    def test_unit_point(self):
        assert R.value(make_reg(), np.array([1.0])) == pytest.approx(
            math.sqrt(2.0) - 1.0, abs=1e-12)

    def test_l1_asymptote(self):
        assert R.value(make_reg(), np.array([100.0])) == pytest.approx(
            math.sqrt(10001.0) - 1.0, abs=1e-9)

    @pytest.mark.parametrize("t", [0.0, 1e-8, 1e-3, 0.5, 3.0, 1e3, 1e6, -7.2, -1e6])
    def test_algebraic_identity_per_coordinate(self, t):
        # the two closed forms of the summand agree to 1e-12 relative
        mu = 1.7
        reg = make_reg(mu=mu)
        raw = (mu**2 - mu * math.sqrt(mu**2 + t**2) + t**2) / math.sqrt(mu**2 + t**2)
        ours = R.value(reg, np.array([t]))
        assert ours == pytest.approx(raw, rel=1e-12, abs=1e-12)


class TestGradient:
    def test_zero(self):
        np.testing.assert_array_equal(R.gradient(make_reg(p=4), np.zeros(4)), np.zeros(4))

    def test_matches_finite_differences(self, rng):
        reg = make_reg(tau=0.3, mu=2.1, p=8)
        theta = rng.standard_normal(8) * 3
        g = R.gradient(reg, theta)
        eps = 1e-6
        for i in range(8):
            tp, tm = theta.copy(), theta.copy()
            tp[i] += eps
            tm[i] -= eps
            fd = (R.value(reg, tp) - R.value(reg, tm)) / (2 * eps)
            assert g[i] == pytest.approx(fd, rel=1e-7, abs=1e-10)

    def test_saturates_at_tau(self):
        g = R.gradient(make_reg(), np.array([1000.0]))
        assert abs(g[0] - 1.0) < 1e-5

    @given(st.lists(st.floats(-1e6, 1e6), min_size=1, max_size=20),
           st.floats(0.01, 100.0), st.floats(1e-6, 10.0))
    @settings(max_examples=60, deadline=None)
    def test_sup_norm_bounded_by_tau(self, coords, mu, tau):
        theta = np.asarray(coords)
        reg = make_reg(tau=tau, mu=mu, p=len(coords))
        assert np.abs(R.gradient(reg, theta)).max() <= tau * (1 + 1e-12)


class TestHessianDiag:
    def test_at_zero(self):
        reg = make_reg(tau=0.7, mu=2.0, p=3)
        np.testing.assert_allclose(R.hessian_diag(reg, np.zeros(3)), 0.7 / 2.0)

    def test_strictly_positive_and_monotone(self, rng):
        reg = make_reg(tau=0.2, mu=1.3, p=5)
        h1 = R.hessian_diag(reg, np.array([0.0, 0.5, 1.0, 2.0, 4.0]))
        assert np.all(h1 > 0)
        assert np.all(np.diff(h1) < 0)  # decreasing in |theta_i|

    def test_matches_finite_differences_of_gradient(self, rng):
        reg = make_reg(tau=1.4, mu=0.8, p=6)
        theta = rng.standard_normal(6)
        h = R.hessian_diag(reg, theta)
        eps = 1e-6
        for i in range(6):
            tp, tm = theta.copy(), theta.copy()
            tp[i] += eps
            tm[i] -= eps
            fd = (R.gradient(reg, tp)[i] - R.gradient(reg, tm)[i]) / (2 * eps)
            assert h[i] == pytest.approx(fd, rel=1e-6)


class TestFusedAndConstants:
    def test_value_grad_hess_consistent(self, rng):
        reg = make_reg(tau=0.05, mu=3.0, p=12)
        theta = rng.standard_normal(12) * 2
        v, g, h = R.value_grad_hess(reg, theta)
        assert v == pytest.approx(R.value(reg, theta), rel=1e-14)
        np.testing.assert_allclose(g, R.gradient(reg, theta), rtol=1e-14)
        np.testing.assert_allclose(h, R.hessian_diag(reg, theta), rtol=1e-14)

    def test_gsc_constant_formula(self):
        reg = R.GscRegularizer(tau=1e-4, mu=4.0, p=1000)
        assert reg.M_g == pytest.approx(2.0 * 4.0 ** (-0.7) * 1000 ** 0.2)
        assert reg.step_constant == pytest.approx(1e-4 * reg.M_g)
        assert reg.metric_constant == pytest.approx((1e-4) ** (-0.3) * reg.M_g)

    def test_v_block_only_gradient_and_value(self, rng):
        theta = rng.standard_normal(10)
        reg = make_reg(tau=0.3, mu=1.0, p=10, v_block_only=True, v_block_start=6)
        g = R.gradient(reg, theta)
        np.testing.assert_array_equal(g[:6], 0.0)
        full = make_reg(tau=0.3, mu=1.0, p=4)
        assert R.value(reg, theta) == pytest.approx(R.value(full, theta[6:]))
        # the Hessian keeps its positive diagonal everywhere
        assert np.all(R.hessian_diag(reg, theta) > 0)
        v, g2, h2 = R.value_grad_hess(reg, theta)
        assert v == pytest.approx(R.value(reg, theta), rel=1e-12)
        np.testing.assert_allclose(g2, g, rtol=1e-12)

    def test_convexity_spot_check(self, rng):
        reg = make_reg(tau=0.9, mu=1.5, p=7)
        for _ in range(50):
            a = rng.standard_normal(7) * 4
            b = rng.standard_normal(7) * 4
            mid = R.value(reg, 0.5 * a + 0.5 * b)
            assert mid <= 0.5 * R.value(reg, a) + 0.5 * R.value(reg, b) + 1e-12


class TestOmega:
    @pytest.mark.parametrize("nu", [2.0, 2.3, 2.6, 3.0, 4.0])
    def test_limit_half(self, nu):
        assert R.omega_nu(nu, 1e-9) == pytest.approx(0.5, abs=1e-6)

    def test_nu3_branch_value(self):
        assert R.omega_nu(3.0, 0.5) == pytest.approx(0.7725887222397811, abs=1e-6)

    def test_nu2_at_one(self):
        assert R.omega_nu(2.0, 1.0) == pytest.approx(math.e - 2.0, abs=1e-12)

    @pytest.mark.parametrize("nu", [2.6, 3.0, 4.0])
    def test_domain_error(self, nu):
        with pytest.raises(ValueError):
            R.omega_nu(nu, 1.0)

    @pytest.mark.parametrize("nu", [2.0, 2.3, 2.6, 3.0, 4.0])
    def test_monotone_increasing(self, nu):
        grid = np.linspace(-0.95, 0.95, 77)
        vals = [R.omega_nu(nu, r) for r in grid]
        assert np.all(np.diff(vals) > 0)

    @pytest.mark.parametrize("nu", [2.0, 2.3, 2.6, 3.0, 4.0])
    def test_series_matches_closed_form_at_threshold(self, nu):
        # just above the series cutoff both evaluations must agree closely
        for r in (1.0001e-4, -1.0001e-4):
            series = R._omega_series(nu, r)
            closed = R.omega_nu(nu, r)
            assert series == pytest.approx(closed, rel=1e-8)


class TestMetricTerm:
    def test_zero_displacement(self, rng):
        reg = make_reg(tau=0.2, mu=1.0, p=5, nu=2.6)
        theta = rng.standard_normal(5)
        assert R.d_nu(reg, theta, theta) == 0.0

    def test_order_two_is_scaled_euclidean(self):
        delta = np.array([2.0, 0.0])
        assert R.scaled_metric(2.0, 3.0, np.zeros(2), delta, np.ones(2)) == pytest.approx(6.0)

    def test_recompute_oracle(self, rng):
        reg = make_reg(tau=0.7, mu=1.2, p=6, nu=2.6)
        a = rng.standard_normal(6)
        b = a + 0.1 * rng.standard_normal(6)
        h = R.hessian_diag(reg, a)
        got = R.d_nu(reg, a, b, h)
        delta = b - a
        eu = math.sqrt(sum(d * d for d in delta))
        loc = math.sqrt(sum(hi * d * d for hi, d in zip(h, delta)))
        expect = 0.3 * reg.metric_constant * eu ** 0.4 * loc ** 0.6
        assert got == pytest.approx(expect, rel=1e-10)


class TestSandwichBound:
    def test_second_order_bounds_hold(self, rng):
        """omega(-d) ||D||_th^2 <= g(t2) - g(t1) - <grad, D> <= omega(d) ||D||_th^2."""
        reg = make_reg(tau=1e-2, mu=1.5, p=30, nu=2.6)
        for _ in range(60):
            a = rng.standard_normal(30)
            delta = rng.standard_normal(30) * 0.05
            b = a + delta
            h = R.hessian_diag(reg, a)
            d = R.d_nu(reg, a, b, h)
            assert d < 1.0
            excess = R.value(reg, b) - R.value(reg, a) - float(R.gradient(reg, a) @ delta)
            local_sq = float(np.sum(h * delta * delta))
            lo = R.omega_nu(reg.nu, -d) * local_sq
            hi = R.omega_nu(reg.nu, d) * local_sq
            assert lo - 1e-13 <= excess <= hi + 1e-13


class TestDualLocalNorm:
    def test_zero_theta(self):
        geo = R.dual_local_norm(make_reg(p=3), np.zeros(3))
        assert geo.eta == 0.0
        assert np.all(geo.h_diag > 0)

    def test_scalar_value(self):
        geo = R.dual_local_norm(make_reg(), np.array([1.0]))
        assert geo.eta == pytest.approx(2.0 ** 0.25, abs=1e-12)

    def test_matches_dense_solve(self, rng):
        reg = make_reg(tau=0.4, mu=2.2, p=9)
        theta = rng.standard_normal(9) * 3
        geo = R.dual_local_norm(reg, theta)
        g = R.gradient(reg, theta)
        H = np.diag(R.hessian_diag(reg, theta))
        x = solve_spd(H, g)
        assert geo.eta == pytest.approx(math.sqrt(float(g @ x)), rel=1e-10)


class TestSuggestTau:
    def test_zero_eta_unbounded(self, rng):
        G = rng.standard_normal((4, 4))
        assert R.suggest_tau(1.0, 0.0, G) == math.inf

    def test_direct_solve(self):
        # sqrt(k * lambda_1) = 3 for a 3x3 matrix with top singular value sqrt(3)
        G = np.diag([math.sqrt(3.0), 0.1, 0.1])
        tau = R.suggest_tau(1.0, 1.0, G)
        assert tau == pytest.approx(2.0, rel=1e-12)

    def test_substitute_back(self, rng):
        G = rng.standard_normal((6, 6)) + 2 * np.eye(6)
        M, eta0 = 0.7, 1.3
        tau = R.suggest_tau(M, eta0, G)
        k = 6
        lam1 = np.linalg.eigvalsh(G.T @ G)[-1]
        assert 1.0 + tau * M * eta0 == pytest.approx(math.sqrt(k * lam1), rel=1e-8)

    def test_no_admissible_tau(self):
        G = np.diag([1e-3, 1e-3])
        with pytest.raises(R.NoAdmissibleTauError):
            R.suggest_tau(1.0, 1.0, G)
