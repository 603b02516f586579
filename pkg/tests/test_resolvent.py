"""Drift splitting, truncation levels, the threshold root, and norm decay."""

import math

import numpy as np
import pytest

from lplab.closed_forms import sign_drift_decay_rate, sign_drift_resolvent_l1
from lplab.errors import NumericalError, ValidationError
from lplab.geometry import GridSpec, ball
from lplab.operators import CLASS_TRACE, OperatorSpec, laplacian, sign_drift
from lplab.resolvent import (BumpFunction, DriftField, check_dichotomy,
                             default_test_bank, estimate_operator_norm,
                             lambda_of_mu, mu_theta, nu_theta, split_drift)


class TestSplitDrift:
    def test_scalar_values(self):
        b1, b2 = split_drift(np.array([[3.0]]), 2.0)
        assert b1[0, 0] == pytest.approx(2.0) and b2[0, 0] == pytest.approx(1.0)

    def test_below_cut_untouched(self):
        b = np.array([[0.5], [-1.0]])
        b1, b2 = split_drift(b, 2.0)
        np.testing.assert_array_equal(b1, b)
        np.testing.assert_array_equal(b2, 0.0 * b)

    def test_vector_truncation(self):
        b = np.array([[3.0, 4.0]])
        b1, b2 = split_drift(b, 5.0)
        np.testing.assert_allclose(b2, [[0.0, 0.0]])
        b1, b2 = split_drift(b, 2.5)
        np.testing.assert_allclose(b1, [[1.5, 2.0]])
        np.testing.assert_allclose(b2, [[1.5, 2.0]])

    def test_reconstruction_and_cap(self):
        rng = np.random.default_rng(8)
        b = rng.normal(size=(200, 2)) * 3.0
        for cut in (0.0, 0.5, 2.0, 10.0):
            b1, b2 = split_drift(b, cut)
            np.testing.assert_allclose(b1 + b2, b, atol=1e-14)
            assert np.all(np.linalg.norm(b1, axis=1) <= cut + 1e-12)
            # b2 vanishes exactly where |b| <= cut
            small = np.linalg.norm(b, axis=1) <= cut
            assert np.all(b2[small] == 0.0)

    def test_negative_cut_rejected(self):
        with pytest.raises(ValidationError):
            split_drift(np.ones((1, 1)), -1.0)


class _CubeBump:
    def __init__(self, amp):
        self.amp = amp

    def __call__(self, t, X):
        # half-open cube so the node-centred cells tile it exactly
        X = np.atleast_2d(X)
        inside = np.all((X >= 0.0) & (X < 1.0), axis=1)
        out = np.zeros((len(X), X.shape[1]))
        out[:, 0] = self.amp * inside
        return out


def cube_drift(amp=2.0, n=512):
    dom = ball(2.0, center=(0.5,), d=1)
    grid = GridSpec.cover(dom, n)
    return DriftField.from_function(_CubeBump(amp), grid, exterior_sup=0.0)


class TestMuTheta:
    def test_unit_cube_hand_value(self):
        # ||(2 - mu)_+||_{L_2(cube)} = 2 - mu; target 0.5 -> mu_theta = 1.5
        drift = cube_drift()
        val = mu_theta(drift, theta=0.5, lam=1.0, q_exp=2.0,
                       branch="parabolic")
        assert val == pytest.approx(1.5, abs=1e-6)

    def test_global_constant_jump_logic(self):
        dom = ball(2.0, center=(0.0,), d=1)
        grid = GridSpec.cover(dom, 128)

        class ConstB:
            def __call__(self, t, X):
                X = np.atleast_2d(X)
                out = np.zeros_like(X)
                out[:, 0] = 3.0
                return out

        drift = DriftField.from_function(ConstB(), grid, exterior_sup=3.0)
        # excess norm is infinite below 3 no matter the target
        val = mu_theta(drift, theta=0.01, lam=1.0, q_exp=2.0,
                       branch="parabolic")
        assert val == pytest.approx(3.0, abs=1e-12)

    def test_huge_theta_gives_zero(self):
        drift = cube_drift()
        assert mu_theta(drift, theta=1e6, lam=1.0, q_exp=2.0,
                        branch="parabolic") == 0.0

    def test_monotonicity(self):
        drift = cube_drift(n=128)
        # parabolic target shrinks as lambda grows -> mu_theta nondecreasing
        lams = [0.5, 1.0, 2.0, 4.0]
        vals = [mu_theta(drift, 0.5, lam, 2.0, branch="parabolic")
                for lam in lams]
        assert all(b >= a - 1e-9 for a, b in zip(vals, vals[1:]))
        thetas = [0.25, 0.5, 1.0]
        tvals = [mu_theta(drift, th, 1.0, 2.0, branch="parabolic")
                 for th in thetas]
        assert all(b <= a + 1e-9 for a, b in zip(tvals, tvals[1:]))

    def test_elliptic_branch_target(self):
        drift = cube_drift(n=128)
        # elliptic branch: target = theta, q = d = 1:
        # ||(2-mu)_+||_{L_1(cube)} = 2 - mu -> mu_theta = 2 - theta
        val = mu_theta(drift, theta=0.5, lam=123.0, q_exp=1.0,
                       branch="elliptic")
        assert val == pytest.approx(1.5, abs=1e-6)

    def test_validation(self):
        drift = cube_drift(n=64)
        with pytest.raises(ValidationError):
            mu_theta(drift, theta=0.0, lam=1.0, q_exp=2.0)
        with pytest.raises(ValidationError):
            mu_theta(drift, theta=1.0, lam=1.0, q_exp=2.0, branch="weird")


class TestNuTheta:
    def test_unit_cube(self):
        # d = 1: ||b2||_{L_3}^3 = 1 on the unit cube with amp 1, theta = 1
        drift = cube_drift(amp=1.0)
        assert nu_theta(drift, 1.0) == pytest.approx(1.0, rel=1e-6)

    def test_zero_field(self):
        drift = cube_drift(amp=0.0)
        assert nu_theta(drift, 1.0) == 0.0

    def test_theta_scaling(self):
        drift = cube_drift(amp=1.0)
        # theta^{-(d+1)} = theta^{-2}
        assert nu_theta(drift, 0.5) == pytest.approx(4.0, rel=1e-6)


class TestLambdaOfMu:
    def test_linear_case(self):
        for mu in (1e-3, 1.0, 1e3):
            lam = lambda_of_mu(1.0, lambda l: 0.0, mu)
            assert lam == pytest.approx(mu, rel=1e-10)

    def test_pure_sqrt_case(self):
        M = 2.5
        for mu in (0.01, 1.0, 100.0):
            lam = lambda_of_mu(0.0, lambda l: M, mu)
            assert lam == pytest.approx(mu * mu / (M * M), rel=1e-10)

    def test_no_root_reported(self):
        with pytest.raises(NumericalError):
            lambda_of_mu(0.0, lambda l: 0.0, 1.0)

    def test_threshold_lower_bounds(self):
        # with mu_theta(lam) = nu sqrt(lam) + M the root obeys the two-regime
        # lower bounds around the threshold (K + nu + 1) M^2
        K, nu, M = 1.0, 0.7, 2.0
        kappa = K + nu + 1.0

        def mtheta(lam):
            return nu * math.sqrt(lam) + M

        for mu in np.geomspace(1e-3, 1e3, 25):
            lam = lambda_of_mu(K, mtheta, mu)
            # defining equation holds
            assert K * lam + mtheta(lam) * math.sqrt(lam) == pytest.approx(
                mu, rel=1e-9)
            if mu >= kappa * M * M:
                assert lam >= mu / kappa * (1 - 1e-9)
            else:
                assert lam >= mu * mu / (kappa ** 2 * M * M) * (1 - 1e-9)

    def test_strictly_increasing(self):
        vals = [lambda_of_mu(0.5, lambda l: 1.0 + 0.1 * math.sqrt(l), mu)
                for mu in (0.1, 1.0, 10.0)]
        assert vals[0] < vals[1] < vals[2]


LAP1 = OperatorSpec(coeffs=laplacian(1), delta=1.0, K=0.0)


class TestOperatorNorm:
    def test_heat_resolvent_norm_approaches_inverse_mu(self):
        # L1 -> L1 norm of (mu - d^2/dx^2)^{-1} on a large interval is 1/mu
        mu = 2.0
        R = 60.0
        dom = ball(R, center=(0.0,), d=1)
        grid = GridSpec.cover(dom, 6000)
        bank = [BumpFunction(w) for w in (0.05, 0.1, 0.4)]
        est = estimate_operator_norm(LAP1, mu, 1.0, dom, grid, bank)
        assert est.n_hat == pytest.approx(1.0 / mu, rel=0.03)
        assert not est.negative_part_flag

    def test_monotone_in_mu_on_fixed_bank(self):
        R = 20.0
        dom = ball(R, center=(0.0,), d=1)
        grid = GridSpec.cover(dom, 2000)
        bank = default_test_bank()
        last = math.inf
        for mu in (0.5, 1.0, 2.0, 4.0):
            est = estimate_operator_norm(LAP1, mu, 1.0, dom, grid, bank)
            assert est.n_hat <= last + 1e-12
            last = est.n_hat

    def test_empty_bank_rejected(self):
        dom = ball(1.0, center=(0.0,), d=1)
        grid = GridSpec.cover(dom, 64)
        with pytest.raises(ValidationError):
            estimate_operator_norm(LAP1, 1.0, 1.0, dom, grid, [])


class TestDichotomy:
    def test_sign_drift_matches_closed_form(self):
        M = 3.0
        spec = OperatorSpec(coeffs=sign_drift(M), delta=1.0, K=1.0,
                            class_kind=CLASS_TRACE)
        bank = [BumpFunction(w) for w in (0.02, 0.04)]

        def factory(mu):
            nu = sign_drift_decay_rate(M, mu)
            R = 9.0 / nu + 2.0
            n = int(math.ceil(2 * R / (0.02 / 12)))
            dom = ball(R, center=(0.0,), d=1)
            return dom, GridSpec.cover(dom, min(n, 400000))

        report = check_dichotomy(spec, 1.0, [1.0, 16.0], test_bank=bank,
                                 domain_factory=factory, drift_sup=M)
        for mu, n_hat in zip(report.mu_list, report.n_hat):
            exact = sign_drift_resolvent_l1(M, mu)
            assert n_hat == pytest.approx(exact, rel=0.05)
        assert report.threshold == pytest.approx((1.0 + 1.0) * M * M)

    def test_requires_domain_factory(self):
        spec = OperatorSpec(coeffs=sign_drift(1.0), delta=1.0, K=1.0,
                            class_kind=CLASS_TRACE)
        with pytest.raises(ValidationError):
            check_dichotomy(spec, 1.0, [1.0])


def test_default_bank_shape():
    bank = default_test_bank()
    assert len(bank) >= 16
    X = np.linspace(-3, 3, 301)[:, None]
    for f in bank:
        vals = f(0.0, X)
        assert np.all(vals >= 0.0)
        assert np.any(vals > 0.0)
