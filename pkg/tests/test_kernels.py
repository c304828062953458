import math

import numpy as np
import pytest
from scipy import integrate, special

from spdelab import kernels as k
from spdelab.errors import (
    BadTimeOrder,
    NonFiniteIntegrand,
    NonpositiveTime,
    QuadratureFailure,
)


class TestQuadrature:
    def test_linear(self):
        r = k.quad_1d(lambda x: x, 0, 1)
        assert abs(r.value - 0.5) < 1e-12
        assert r.abs_error_estimate >= 0 and r.evaluations > 0

    def test_endpoint_singularity(self):
        assert abs(k.quad_1d(lambda x: x ** -0.5, 0, 1).value - 2) < 1e-8

    def test_unit_square(self):
        assert k.quad_2d(lambda x, y: 1.0, (0, 1, 0, 1)).value == pytest.approx(1.0, abs=1e-12)

    def test_failure_reported(self):
        with pytest.raises(QuadratureFailure):
            k.quad_1d(lambda x: math.sin(1 / x), 1e-4, 1, tol=1e-14, limit=5)

    def test_nonfinite_integrand(self):
        with pytest.raises(NonFiniteIntegrand):
            k.quad_1d(lambda x: float("nan"), 0, 1)

    def test_bad_interval(self):
        with pytest.raises(ValueError):
            k.quad_1d(lambda x: x, 1, 0)


class TestHeatKernel:
    def test_values(self):
        assert k.heat_kernel(1, 0, 1) == pytest.approx(1 / math.sqrt(2 * math.pi), rel=1e-15)
        assert k.heat_kernel(0.3, 0.7) == k.heat_kernel(0.3, -0.7)
        assert k.heat_kernel(2.0, np.array([1.0, 1.0]), d=2) == pytest.approx(
            math.exp(-0.5) / (4 * math.pi))

    def test_unit_mass(self):
        r = k.quad_1d(lambda x: k.heat_kernel(0.7, x), -40, 40, tol=1e-13)
        assert abs(r.value - 1) < 1e-10

    def test_nonpositive_time(self):
        with pytest.raises(NonpositiveTime):
            k.heat_kernel(0, 1)


class TestWaveKernel:
    def test_values(self):
        assert k.wave_kernel(2, 1) == 0.5
        assert k.wave_kernel(1, 1.5) == 0.0
        assert k.wave_kernel(1, 1.0) == 0.5

    def test_mass(self):
        r = k.quad_1d(lambda x: k.wave_kernel(1.3, x), -3, 3, points=[-1.3, 1.3])
        assert r.value == pytest.approx(1.3, abs=1e-12)

    def test_nonpositive_time(self):
        with pytest.raises(NonpositiveTime):
            k.wave_kernel(-1, 0)


class TestSemigroup:
    @pytest.mark.parametrize("t,s,w", [(0.3, 0.7, 0.0), (1, 1, 2), (0.01, 2, -5), (2, 0.01, 5)])
    def test_residual(self, t, s, w):
        assert k.heat_semigroup_residual(t, s, w).value < 1e-8

    def test_perturbation_is_visible(self):
        assert k.heat_semigroup_residual(0.3, 0.7, 0.0, perturb=1e-3).value > 1e-4


class TestBallKernels:
    def test_heat_full_mass(self):
        assert abs(k.heat_ball_kernel(1.0, 0.5, 0.0, 10 * math.sqrt(0.5)) - 1) < 1e-12

    def test_heat_symmetric_form(self):
        R, tau = 0.8, 0.4
        assert k.heat_ball_kernel(1.0, 0.6, 0.0, R) == pytest.approx(
            2 * special.ndtr(R / math.sqrt(tau)) - 1, rel=1e-14)

    def test_heat_against_quadrature(self):
        q = k.quad_1d(lambda x: k.heat_kernel(0.5, x - 1.3), -2, 2, tol=1e-13).value
        assert abs(k.heat_ball_kernel(0.75, 0.25, 1.3, 2) - q) < 1e-10

    def test_heat_bounds_and_monotone(self):
        Rs = np.linspace(0.1, 5, 30)
        v = np.array([k.heat_ball_kernel(1, 0.2, 0.7, R) for R in Rs])
        assert np.all((v >= 0) & (v <= 1)) and np.all(np.diff(v) >= 0)

    def test_wave_values(self):
        assert k.wave_ball_kernel(2, 1, 0.0, 3) == 1.0
        assert k.wave_ball_kernel(2, 1, 4.0, 3) == 0.0
        assert k.wave_ball_kernel(2, 1, 3.0, 3) == 0.5

    def test_wave_bounds_and_monotone(self):
        Rs = np.linspace(0.1, 5, 30)
        v = np.array([k.wave_ball_kernel(1.5, 0.2, 0.7, R) for R in Rs])
        assert np.all((v >= 0) & (v <= 1.3)) and np.all(np.diff(v) >= 0)

    def test_time_order(self):
        with pytest.raises(BadTimeOrder):
            k.heat_ball_kernel(1, 1, 0, 1)
        with pytest.raises(BadTimeOrder):
            k.wave_ball_kernel(1, 2, 0, 1)


class TestWaveOverlap:
    def test_values(self):
        assert k.wave_overlap_integral(1, 0) == 0.5
        assert k.wave_overlap_integral(1, 2) == 0.0
        assert k.wave_overlap_integral(1, 1) == 0.25

    def test_against_indicator_quadrature(self):
        rng = np.random.default_rng(5)
        for tau, delta in zip(rng.uniform(0.05, 3, 100), rng.uniform(0, 6, 100)):
            assert abs(k.wave_overlap_integral(tau, delta) - k._indicator_overlap_quad(tau, delta)) < 1e-10


class TestWaveColoredOverlap:
    def test_regression_value(self):
        # 1/4 int int_{[-1,1]^2} |y - z|^-1/2 = 4 sqrt(2) / 3
        assert k.wave_colored_overlap(1, 0, 0.5).value == pytest.approx(4 * math.sqrt(2) / 3, rel=1e-12)

    def test_against_brute_force_double_quadrature(self):
        # split along the diagonal so each piece has an endpoint singularity only
        f = lambda z, y: 0.25 * abs(y - z) ** -0.5
        lower, _ = integrate.dblquad(f, -1, 1, -1, lambda y: y, epsabs=1e-11)
        upper, _ = integrate.dblquad(f, -1, 1, lambda y: y, 1, epsabs=1e-11)
        assert k.wave_colored_overlap(1, 0, 0.5).value == pytest.approx(lower + upper, abs=1e-7)

    def test_offset_against_double_quadrature(self):
        tau, delta, beta = 0.7, 2.5, 0.3
        f = lambda z, y: 0.25 * abs(y - z) ** -beta
        val, _ = integrate.dblquad(f, delta - tau, delta + tau, -tau, tau, epsabs=1e-12)
        assert k.wave_colored_overlap(tau, delta, beta).value == pytest.approx(val, rel=1e-9)

    def test_symmetric_and_continuous(self):
        v = k.wave_colored_overlap(1, 0.8, 0.5).value
        assert k.wave_colored_overlap(1, -0.8, 0.5).value == v
        assert abs(k.wave_colored_overlap(1, 2 - 1e-9, 0.5).value
                   - k.wave_colored_overlap(1, 2 + 1e-9, 0.5).value) < 1e-7

    def test_decreasing_beyond_support(self):
        d = np.linspace(2.01, 8, 30)
        v = [k.wave_colored_overlap(1, x, 0.4).value for x in d]
        assert np.all(np.diff(v) < 0)

    def test_scaling_law(self):
        rng = np.random.default_rng(9)
        for tau, delta, beta in zip(rng.uniform(0.1, 2, 20), rng.uniform(0, 5, 20), rng.uniform(0.1, 0.9, 20)):
            a = k.wave_colored_overlap(tau, delta, beta).value
            b = k.wave_colored_overlap(2 * tau, 2 * delta, beta).value
            assert b / (2 ** (2 - beta) * a) == pytest.approx(1, abs=1e-6)

    def test_closed_form(self):
        for tau, delta, beta in [(0.3, 0.0, 0.2), (1.0, 1.0, 0.5), (2.0, 7.5, 0.8)]:
            assert k.wave_colored_overlap_exact(tau, delta, beta) == pytest.approx(
                k.wave_colored_overlap(tau, delta, beta).value, rel=1e-10)


class TestHeatColoredIntegrand:
    @pytest.mark.parametrize("tau,beta", [(0.5, 0.5), (0.05, 0.25), (2.0, 0.75)])
    def test_origin(self, tau, beta):
        expect = (2 * tau) ** (-beta / 2) * 2 ** (-beta / 2) * special.gamma((1 - beta) / 2) / math.sqrt(math.pi)
        assert k.heat_colored_cov_integrand(tau, 0.0, beta).value == pytest.approx(expect, rel=1e-10)

    def test_even(self):
        assert k.heat_colored_cov_integrand(0.3, 1.1, 0.4).value == pytest.approx(
            k.heat_colored_cov_integrand(0.3, -1.1, 0.4).value, rel=1e-12)

    def test_far_field(self):
        tau, beta = 0.5, 0.6
        for w in (10.0, 15.0, 40.0):
            assert k.heat_colored_cov_integrand(tau, w, beta).value == pytest.approx(w ** -beta, rel=0.01)

    def test_decreasing_and_finite(self):
        ws = np.linspace(0.01, 6, 40)
        v = [k.heat_colored_cov_integrand(0.2, w, 0.5).value for w in ws]
        assert np.all(np.isfinite(v)) and np.all(np.diff(v) < 0)

    def test_closed_form_agrees(self):
        for tau, w, beta in [(0.1, 0.3, 0.5), (1.0, 3.0, 0.2), (0.02, 5.0, 0.9)]:
            assert k.heat_colored_cov_exact(tau, w, beta) == pytest.approx(
                k.heat_colored_cov_integrand(tau, w, beta).value, rel=1e-9)


class TestIdentitySuite:
    def test_all_pass(self):
        checks = k.identity_suite()
        assert all(c.passed for c in checks), checks

    def test_perturbation_fails_semigroup(self):
        checks = k.identity_suite(perturb=1e-3)
        assert not checks[0].passed
