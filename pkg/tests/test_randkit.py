"""
亂數取樣與動差對照表測試

統計檢驗採用 4 倍標準誤法則。

Author: Leon Lu
Created: 2025-01-24
"""

import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate

from src.modules.errors import InvalidParameterError
from src.modules.randkit import (
    MAX_MOMENT_CONSTANT,
    RngState,
    SimplexSample,
    as_generator,
    exponential_quantile,
    gamma_centered_sixth_moment,
    gamma_moment_oracle,
    gamma_uniform_decomposition,
    poisson_inverse_moment_bound,
    poisson_pair_deviation_bound,
    sample_exponential,
    sample_gamma,
    sample_poisson,
    sample_simplex,
    sample_simplex_batch,
    simplex_cross_moment,
    simplex_exp_moment,
    simplex_exp_moment_bound,
    simplex_max_moment_bound,
    simplex_moment_oracle,
    split_generators,
)

K_SE = 4.0


def assert_mean_close(samples, expected, k=K_SE):
    samples = np.asarray(samples, dtype=float)
    se = samples.std(ddof=1) / math.sqrt(samples.size)
    assert abs(samples.mean() - expected) < k * se + 1e-15


class TestRngState:
    """亂數流測試"""

    def test_same_stream_reproducible(self):
        a = RngState(7, 3).generator().random(5)
        b = RngState(7, 3).generator().random(5)
        np.testing.assert_array_equal(a, b)

    def test_different_streams_differ(self):
        a = RngState(7, 3).generator().random(5)
        b = RngState(7, 4).generator().random(5)
        assert not np.array_equal(a, b)

    def test_rejects_out_of_range(self):
        with pytest.raises(InvalidParameterError):
            RngState(-1)
        with pytest.raises(InvalidParameterError):
            RngState(0, 2 ** 64)
        with pytest.raises(InvalidParameterError):
            RngState(True)

    def test_spawn_keeps_seed(self):
        assert RngState(11, 0).spawn(9) == RngState(11, 9)

    def test_as_generator_passthrough(self):
        gen = np.random.default_rng(0)
        assert as_generator(gen) is gen
        with pytest.raises(InvalidParameterError):
            as_generator(42)

    def test_split_generators_deterministic(self):
        """同一流每次分裂得到相同子流"""
        first = [g.random() for g in split_generators(RngState(1, 2), 3)]
        second = [g.random() for g in split_generators(RngState(1, 2), 3)]
        assert first == second
        assert len(set(first)) == 3


class TestDistributionSamplers:
    """分布取樣測試"""

    @pytest.fixture
    def rng(self):
        return RngState(20250124, 0).generator()

    def test_exponential_quantile(self):
        assert exponential_quantile(0.5, 1.0) == pytest.approx(math.log(2.0), abs=1e-15)
        assert exponential_quantile(0.0, 3.0) == 0.0
        with pytest.raises(InvalidParameterError):
            exponential_quantile(1.0, 1.0)

    @pytest.mark.statistical
    def test_exponential_mean_and_variance(self, rng):
        draws = sample_exponential(rng, 2.0, 200_000)
        assert_mean_close(draws, 0.5)
        assert_mean_close((draws - 0.5) ** 2, 0.25)

    def test_exponential_scalar(self, rng):
        assert isinstance(sample_exponential(rng, 1.0), float)
        with pytest.raises(InvalidParameterError):
            sample_exponential(rng, 0.0)

    @pytest.mark.statistical
    def test_poisson_zero_mass(self, rng):
        counts = sample_poisson(rng, 4.0, 200_000)
        assert_mean_close(counts == 0, math.exp(-4.0))

    @pytest.mark.statistical
    def test_gamma_moments(self, rng):
        draws = sample_gamma(rng, 8, 8.0, 200_000)
        assert_mean_close(draws, 1.0)
        assert_mean_close((draws - 1.0) ** 2, 1.0 / 8.0)

    def test_gamma_requires_integer_shape(self, rng):
        with pytest.raises(InvalidParameterError):
            sample_gamma(rng, 2.5, 1.0, 10)


class TestSimplex:
    """單純形取樣與動差測試"""

    def test_simplex_one_dimension(self):
        sample = sample_simplex(RngState(0), 1)
        np.testing.assert_array_equal(sample.u, [1.0])

    def test_simplex_zero_dimension_rejected(self):
        with pytest.raises(InvalidParameterError):
            sample_simplex(RngState(0), 0)

    @given(n=st.integers(min_value=1, max_value=200), seed=st.integers(min_value=0, max_value=2 ** 32))
    @settings(max_examples=50, deadline=None)
    def test_simplex_on_surface(self, n, seed):
        """樣本為正且總和為一"""
        sample = sample_simplex(RngState(seed), n)
        assert sample.u.shape == (n,)
        assert np.all(sample.u > 0)
        assert abs(sample.u.sum() - 1.0) <= 1e-12

    def test_simplex_sample_validation(self):
        with pytest.raises(InvalidParameterError):
            SimplexSample(2, np.array([0.7, 0.7]))
        with pytest.raises(InvalidParameterError):
            SimplexSample(2, np.array([1.0, 0.0]))

    def test_moment_oracle_values(self):
        assert simplex_moment_oracle(2, 1, exact=True) == Fraction(1, 2)
        assert simplex_moment_oracle(3, 2, exact=True) == Fraction(2, 12)
        assert simplex_moment_oracle(10, 3) == pytest.approx(6.0 / (10 * 11 * 12))
        assert simplex_cross_moment(4, exact=True) == Fraction(1, 20)

    @pytest.mark.statistical
    @pytest.mark.parametrize("n", [2, 3, 10, 100])
    def test_simplex_moments(self, n):
        batch = sample_simplex_batch(RngState(5, n), n, 100_000)
        for p in (1, 2, 3):
            assert_mean_close(batch[:, 0] ** p, simplex_moment_oracle(n, p))
        assert_mean_close(batch[:, 0] * batch[:, 1], simplex_cross_moment(n))

    @pytest.mark.parametrize("n", [2, 3, 7, 30])
    def test_exp_moment_matches_quadrature(self, n):
        theta = n - 1.0
        direct, _ = integrate.quad(
            lambda x: (n - 1) * (1 - x) ** (n - 2) * math.exp(theta * x), 0.0, 1.0
        )
        assert simplex_exp_moment(n, theta) == pytest.approx(direct, rel=1e-9)

    @pytest.mark.parametrize("n", [2, 4, 8, 16, 32, 64])
    def test_exp_moment_bound(self, n):
        assert simplex_exp_moment(n, n - 1.0) <= simplex_exp_moment_bound(n)

    def test_exp_moment_negative_theta(self):
        direct, _ = integrate.quad(lambda x: 3 * (1 - x) ** 2 * math.exp(-2.0 * x), 0.0, 1.0)
        assert simplex_exp_moment(4, -2.0) == pytest.approx(direct, rel=1e-9)

    @pytest.mark.statistical
    @pytest.mark.parametrize("n", [2, 16, 1024])
    def test_max_moment_bound(self, n):
        batch = sample_simplex_batch(RngState(9, n), n, 2_000)
        assert batch.max(axis=1).mean() <= simplex_max_moment_bound(n)
        assert MAX_MOMENT_CONSTANT == pytest.approx(4.0 * math.log(3.0) / math.log(2.0))


class TestOracles:
    """伽瑪與卜瓦松對照值測試"""

    def test_gamma_moment_oracle(self):
        # Gamma(2, 1.5): E Z^4 = 5!/(1! 1.5^4)
        assert gamma_moment_oracle(2, 1.5, 4) == pytest.approx(120.0 / 1.5 ** 4)

    def test_gamma_centered_sixth(self):
        assert gamma_centered_sixth_moment(1) == pytest.approx(265.0)

    @pytest.mark.statistical
    def test_gamma_centered_sixth_sampled(self):
        draws = sample_gamma(RngState(3), 4, 4.0, 400_000)
        assert_mean_close(np.abs(1.0 - draws) ** 6, gamma_centered_sixth_moment(4))

    @pytest.mark.parametrize("lam", [2.0, 5.0, 20.0])
    def test_poisson_inverse_bound_exact(self, lam):
        """以精確級數比較反動差界限"""
        k = np.arange(1, 400)
        log_pmf = -lam + k * math.log(lam) - np.array([math.lgamma(x + 1) for x in k])
        exact = float(np.sum(np.exp(log_pmf) / k))
        assert exact <= poisson_inverse_moment_bound(lam, 1.0)

    @pytest.mark.parametrize("lam", [2.0, 5.0, 20.0])
    def test_pair_deviation_sharp_below_plain(self, lam):
        assert poisson_pair_deviation_bound(lam, sharp=True) <= poisson_pair_deviation_bound(lam)

    def test_gamma_uniform_decomposition_scalar(self):
        x, y = gamma_uniform_decomposition(3.0, 1.0)
        assert x == pytest.approx(0.5)
        assert y == pytest.approx(4.0)

    def test_gamma_uniform_decomposition_rejects_zero(self):
        with pytest.raises(InvalidParameterError):
            gamma_uniform_decomposition(0.0, 1.0)

    @pytest.mark.statistical
    def test_gamma_uniform_independence(self):
        gen = RngState(4).generator()
        x, y = gamma_uniform_decomposition(gen.standard_exponential(200_000),
                                           gen.standard_exponential(200_000))
        assert_mean_close(x, 0.0)
        assert_mean_close(x ** 2, 1.0 / 3.0)
        assert_mean_close(y, 2.0)
        assert abs(np.corrcoef(x, y)[0, 1]) < K_SE / math.sqrt(x.size)
