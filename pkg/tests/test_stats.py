import math

import numpy as np
import pytest
from scipy.optimize import linear_sum_assignment
from scipy.spatial.distance import cdist

from spdelab import oracle as oc
from spdelab import stats as st
from spdelab.errors import (
    EmptySample,
    LengthMismatch,
    NonpositiveValue,
    TooFewPoints,
    TooFewSamples,
    ZeroVariance,
)
from spdelab.grid_noise import stream
from spdelab.solver import SampleSet


def sample_set(a, u0=None):
    a = np.asarray(a, dtype=float)
    u0 = np.ones_like(a) if u0 is None else np.asarray(u0, dtype=float)
    return SampleSet(a, u0, 1.0, 1.0, 0.5, 0, "test")


def exact_w1_2d(p, q):
    cost = cdist(p, q)
    i, j = linear_sum_assignment(cost)
    return float(cost[i, j].mean())


def naive_distance_covariance(x, y):
    a = np.abs(np.subtract.outer(x, x))
    b = np.abs(np.subtract.outer(y, y))
    A = a - a.mean(0) - a.mean(1)[:, None] + a.mean()
    B = b - b.mean(0) - b.mean(1)[:, None] + b.mean()
    return math.sqrt(max(0.0, float(np.mean(A * B))))


class TestStandardize:
    def test_oracle_sigma(self):
        rng = np.random.default_rng(0)
        n = 4000
        s = 3.7
        f = st.standardize(sample_set(s * rng.standard_normal(n)), st.OracleSigma(s))
        assert f.shape == (n, 2)
        assert abs(np.var(f[:, 0], ddof=1) - 1) < 3 * math.sqrt(2 / (n - 1))

    def test_empirical_sigma(self):
        rng = np.random.default_rng(1)
        f = st.standardize(sample_set(5 * rng.standard_normal(300)), st.EmpiricalSigma())
        assert np.var(f[:, 0], ddof=1) == pytest.approx(1.0, rel=1e-14)

    def test_errors(self):
        with pytest.raises(ZeroVariance):
            st.standardize(sample_set(np.full(10, 2.0)), st.EmpiricalSigma())
        with pytest.raises(ZeroVariance):
            st.standardize(sample_set([1.0, 2.0]), st.OracleSigma(0.0))
        with pytest.raises(EmptySample):
            st.standardize(sample_set([]), st.EmpiricalSigma())


class TestW1Normal:
    def test_quantiles_give_zero(self):
        assert st.w1_to_std_normal(st.normal_quantile_grid(500)) == 0.0

    def test_calibration_at_ten_thousand(self):
        v = st.null_statistics("marginal", 10_000, 200, seed=0)
        assert np.mean(v < 0.02) >= 0.95

    def test_wide_normal(self):
        x = 2 * stream(3, 0, 0).standard_normal(10_000)
        assert st.w1_to_std_normal(x) == pytest.approx(oc.gaussian_w1(1, 2), rel=0.15)

    def test_permutation_and_shift(self):
        rng = np.random.default_rng(2)
        x = rng.standard_normal(400)
        v = st.w1_to_std_normal(x)
        assert st.w1_to_std_normal(rng.permutation(x)) == v
        for c in (-0.3, 0.01, 2.0):
            assert abs(st.w1_to_std_normal(x + c) - v) <= abs(c) + 1e-12

    def test_too_few(self):
        with pytest.raises(TooFewSamples):
            st.w1_to_std_normal(np.zeros(99))


class TestW1Pair:
    def test_examples(self):
        assert st.w1_empirical_pair([3.0, 1.0], [1.0, 3.0]) == 0.0
        assert st.w1_empirical_pair([0, 0], [1, 1]) == 1.0
        with pytest.raises(LengthMismatch):
            st.w1_empirical_pair([0, 1], [0])

    def test_triangle_inequality(self):
        rng = np.random.default_rng(3)
        for _ in range(100):
            n = rng.integers(1, 50)
            a, b, c = (rng.standard_normal(n) * rng.uniform(0.1, 3) + rng.uniform(-2, 2) for _ in range(3))
            assert st.w1_empirical_pair(a, c) <= st.w1_empirical_pair(a, b) + st.w1_empirical_pair(b, c) + 1e-12


class TestSliced:
    def test_self_distance(self):
        p = np.random.default_rng(4).standard_normal((600, 2))
        assert st.w1_joint_vs_product(p, st.ProductResample(0)) >= 0
        assert st.sliced_w1(p, p) == 0.0

    def test_pseudometric(self):
        rng = np.random.default_rng(5)
        for _ in range(100):
            p, q, r = (rng.standard_normal((40, 2)) @ rng.standard_normal((2, 2)) for _ in range(3))
            assert st.sliced_w1(p, q) == pytest.approx(st.sliced_w1(q, p), abs=1e-12)
            assert st.sliced_w1(p, r) <= st.sliced_w1(p, q) + st.sliced_w1(q, r) + 1e-12

    def test_directions(self):
        d = st.slice_directions()
        assert d.shape == (64, 2)
        np.testing.assert_allclose(np.linalg.norm(d, axis=1), 1.0, rtol=1e-15)

    def test_against_assignment_oracle(self):
        # projections are 1-Lipschitz, so the sliced value never exceeds the
        # exact value; for a genuine displacement it is about 2/pi of it
        rng = np.random.default_rng(6)
        for k in range(10):
            p = rng.standard_normal((64, 2))
            q = rng.standard_normal((64, 2)) + 2 * np.array([math.cos(k), math.sin(k)])
            ratio = st.sliced_w1(p, q) / exact_w1_2d(p, q)
            assert 0.5 <= ratio <= 1.5
        for k in range(10):
            p = rng.standard_normal((64, 2))
            q = st.ProductResample(k).draw(p)
            assert st.sliced_w1(p, q) <= exact_w1_2d(p, q) + 1e-12

    def test_product_resample_permutes_second_column(self):
        p = np.random.default_rng(7).standard_normal((50, 2))
        q = st.ProductResample(3).draw(p)
        assert np.array_equal(q[:, 0], p[:, 0])
        assert np.array_equal(np.sort(q[:, 1]), np.sort(p[:, 1]))
        assert np.array_equal(q, st.ProductResample(3).draw(p))

    def test_independent_pairs_below_floor(self):
        p = stream(77, 0, 0).standard_normal((5000, 2))
        assert st.w1_joint_vs_product(p, st.ProductResample(1)) < st.noise_floor("sliced", 5000)

    def test_gaussian_reference(self):
        # at R = 2 the pair is strongly dependent: far from the exact product law,
        # while a draw from the product law itself is not
        law = oc.joint_gaussian_law(oc.WAVE_WHITE, 1.0, 2, 0.5)
        assert law.correlation > 0.5
        dependent = st.w1_joint_vs_product(law.sample(4000, stream(5, 0, 0)), law.product(), seed=9)
        product = st.w1_joint_vs_product(law.product().sample(4000, stream(5, 0, 0)), law.product(), seed=9)
        assert dependent > 3 * st.noise_floor("sliced", 4000) > product

    def test_too_few(self):
        with pytest.raises(TooFewSamples):
            st.w1_joint_vs_product(np.zeros((499, 2)), st.ProductResample())


class TestDistanceCovariance:
    def test_against_naive_formula(self):
        rng = np.random.default_rng(8)
        x = rng.standard_normal(300)
        y = x ** 2 + rng.standard_normal(300)
        assert st.distance_covariance(x, y) == pytest.approx(naive_distance_covariance(x, y), rel=1e-9)

    def test_symmetry_and_constant(self):
        rng = np.random.default_rng(9)
        x, y = rng.standard_normal((2, 200))
        assert st.distance_covariance(x, y) == pytest.approx(st.distance_covariance(y, x), rel=1e-12)
        assert st.distance_covariance(x, np.full(200, 4.0)) == pytest.approx(0.0, abs=1e-12)

    def test_perfect_dependence(self):
        x = np.random.default_rng(10).standard_normal(500)
        assert st.independence_test(x, x).p_value <= 0.005

    def test_deterministic_and_order_invariant(self):
        rng = np.random.default_rng(11)
        x = rng.standard_normal(200)
        y = 0.2 * x + rng.standard_normal(200)
        r1 = st.independence_test(x, y, seed=4)
        assert r1 == st.independence_test(x, y, seed=4)
        perm = rng.permutation(200)
        assert st.independence_test(x[perm], y[perm], seed=4).p_value == r1.p_value
        assert 0 < r1.p_value <= 1 and r1.n_permutations == 199

    @pytest.mark.slow
    def test_null_rejection_rate(self):
        reps = 200
        rejections = 0
        for k in range(reps):
            xy = stream(2024, k, 0).standard_normal((2, 200))
            rejections += st.independence_test(xy[0], xy[1], seed=k).p_value <= 0.05
        assert 0.02 <= rejections / reps <= 0.09

    def test_preconditions(self):
        with pytest.raises(TooFewSamples):
            st.independence_test(np.zeros(99), np.zeros(99))
        with pytest.raises(TooFewSamples):
            st.independence_test(np.arange(200.0), np.arange(200.0), n_perm=50)
        with pytest.raises(LengthMismatch):
            st.distance_covariance(np.zeros(5), np.zeros(6))


class TestLogLogFit:
    def test_exact_line(self):
        R = np.array([4, 8, 16, 32, 64.0])
        fit = st.loglog_fit(np.column_stack([R, 3 * R ** -0.5]))
        assert fit.slope == pytest.approx(-0.5, abs=1e-12)
        assert fit.r_squared == pytest.approx(1.0, abs=1e-12) and fit.point_count == 5

    def test_outlier_reported(self):
        rng = np.random.default_rng(12)
        R = np.geomspace(2, 200, 12)
        v = 3 * R ** -0.5 * np.exp(0.01 * rng.standard_normal(12))
        v[5] *= 2
        fit = st.loglog_fit(np.column_stack([R, v]))
        lx, ly = np.log(R), np.log(v)
        resid = np.abs(ly - (fit.slope * lx + fit.intercept))
        assert fit.residual_max > 3 * np.median(resid)

    def test_scale_invariance(self):
        R = np.array([1, 2, 5, 9.0])
        v = np.array([1.0, 0.8, 0.3, 0.35])
        a = st.loglog_fit(np.column_stack([R, v]))
        b = st.loglog_fit(np.column_stack([R, 7 * v]))
        assert b.slope == pytest.approx(a.slope, abs=1e-12)
        assert b.intercept == pytest.approx(a.intercept + math.log(7), abs=1e-12)
        assert 0 <= a.r_squared <= 1

    def test_heat_riesz_oracle_slope(self):
        Rs = [8, 16, 32, 64, 128]
        pts = [(R, oc.sigma_R_exact(oc.heat_riesz(0.5), 0.5, R)) for R in Rs]
        assert st.loglog_fit(pts).slope == pytest.approx(0.75, abs=0.01)

    def test_errors(self):
        with pytest.raises(TooFewPoints):
            st.loglog_fit([(1, 1), (2, 2)])
        with pytest.raises(NonpositiveValue):
            st.loglog_fit([(1, 1), (2, 0), (3, 1)])


class TestNoiseFloors:
    @pytest.mark.slow
    @pytest.mark.parametrize("kind", ["marginal", "sliced"])
    @pytest.mark.parametrize("n", [2000, 10000])
    def test_frozen_values_reproduce(self, kind, n):
        assert st.measure_noise_floor(kind, n) == st.NOISE_FLOORS[kind][n]

    def test_interpolation(self):
        assert st.noise_floor("marginal", 4000) == st.NOISE_FLOORS["marginal"][4000]
        assert st.noise_floor("sliced", 8000) == pytest.approx(
            st.NOISE_FLOORS["sliced"][10000] * math.sqrt(10000 / 8000))
