"""
電報過程測試

Author: Leon Lu
Created: 2025-01-24
"""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from src.modules.errors import InvalidParameterError, ResourceLimitError
from src.modules.randkit import RngState
from src.modules.telegraph import (
    ScalingParams,
    WaitingTimes,
    abs_moment_bound,
    calibrate_abs_moment_constant,
    gaussian_abs_moment,
    jump_count,
    mean_exact,
    path_eval,
    path_from_waiting_times,
    sample_positions,
    sample_telegraph,
    sample_waiting_times,
    second_moment_exact,
    variance_exact,
)

K_SE = 4.0


@pytest.fixture
def unit_params():
    return ScalingParams(v0=1.0, lam=1.0, L=1.0, T=5.0)


class TestScalingParams:
    """模型參數測試"""

    def test_derived_quantities(self):
        params = ScalingParams(v0=2.0, lam=4.0, L=3.0, T=0.5)
        assert params.T_star == pytest.approx(2.0)
        assert params.L_star == pytest.approx(6.0)
        assert params.sigma2 == pytest.approx(4.0 / (4.0 * 9.0))
        assert params.zeta == pytest.approx(2.0 / 36.0)

    def test_from_scaling_roundtrip(self):
        params = ScalingParams.from_scaling(64.0, 8.0, v0=-2.0, lam=3.0)
        assert params.T_star == pytest.approx(64.0)
        assert params.L_star == pytest.approx(8.0)

    @pytest.mark.parametrize("kwargs", [
        {'v0': 0.0, 'lam': 1.0, 'L': 1.0, 'T': 1.0},
        {'v0': 1.0, 'lam': 0.0, 'L': 1.0, 'T': 1.0},
        {'v0': 1.0, 'lam': 1.0, 'L': -1.0, 'T': 1.0},
        {'v0': 1.0, 'lam': 1.0, 'L': 1.0, 'T': math.inf},
    ])
    def test_rejects_invalid(self, kwargs):
        with pytest.raises(InvalidParameterError):
            ScalingParams(**kwargs)

    def test_from_config(self):
        params = ScalingParams.from_config({'v0': 2.0, 'T': 3.0})
        assert params.v0 == 2.0 and params.lam == 1.0 and params.T == 3.0


class TestWaitingTimes:
    """跳躍計數與路徑求值測試"""

    def test_jump_count_with_tail(self):
        """單一間隔後由哨兵間隔接續"""
        d = WaitingTimes(np.array([0.5]), 2.0)
        # 跳躍於 0.5, 2.5, 4.5, 6.5, 8.5
        assert jump_count(10.0, d) == 5
        assert jump_count(0.49, d) == 0
        assert jump_count(0.5, d) == 1

    def test_jump_count_no_gaps(self):
        d = WaitingTimes(np.zeros(0), 1.0)
        assert jump_count(2.5, d) == 2

    def test_rejects_non_positive_gaps(self):
        with pytest.raises(InvalidParameterError):
            WaitingTimes(np.array([1.0, 0.0]), 1.0)

    def test_path_eval_zigzag(self):
        d = WaitingTimes(np.array([1.0, 1.0, 1.0]), 10.0)
        for t, expected in [(0.5, 0.5), (1.0, 1.0), (1.5, 0.5), (2.0, 0.0), (3.5, 0.5)]:
            assert path_eval(t, d, 1.0) == pytest.approx(expected)

    def test_path_eval_in_tail(self):
        """尾端區域成對抵銷"""
        d = WaitingTimes(np.array([1.0]), 1.0)
        # 跳躍於 1, 2, 3；斜率 +, -, +, -
        assert path_eval(3.5, d, 2.0) == pytest.approx(2.0 * (1 - 1 + 1 - 0.5))

    @given(gaps=st.lists(st.floats(min_value=0.01, max_value=3.0), min_size=0, max_size=12),
           t=st.floats(min_value=0.0, max_value=20.0),
           v0=st.sampled_from([1.0, -2.5]))
    @settings(max_examples=100, deadline=None)
    def test_path_object_matches_direct_eval(self, gaps, t, v0):
        """路徑物件與逐點公式一致"""
        d = WaitingTimes(np.array(gaps), 1.5)
        path = path_from_waiting_times(d, v0, 20.0)
        assert path.evaluate(t) == pytest.approx(path_eval(t, d, v0), abs=1e-9)
        assert abs(path.evaluate(t)) <= abs(v0) * t + 1e-9

    def test_jump_limit(self):
        d = WaitingTimes(np.zeros(0), 1e-3)
        with pytest.raises(ResourceLimitError):
            path_from_waiting_times(d, 1.0, 10.0, max_jumps=100)


class TestSampling:
    """取樣測試"""

    def test_sample_waiting_times_cover_horizon(self, unit_params):
        d = sample_waiting_times(RngState(1), unit_params)
        assert d.partial_sums[-1] > unit_params.T
        assert d.n == 1 or d.partial_sums[-2] <= unit_params.T

    def test_sample_telegraph_slopes_alternate(self, unit_params):
        path = sample_telegraph(RngState(2), unit_params)
        expected = np.where(np.arange(path.n_segments) % 2 == 0, 1.0, -1.0)
        np.testing.assert_array_equal(path.slopes, expected)
        assert path.horizon == unit_params.T

    def test_sample_telegraph_reproducible(self, unit_params):
        a = sample_telegraph(RngState(3, 9), unit_params)
        b = sample_telegraph(RngState(3, 9), unit_params)
        assert a.equals(b)

    def test_resource_limit(self):
        params = ScalingParams(v0=1.0, lam=1000.0, L=1.0, T=10.0)
        with pytest.raises(ResourceLimitError):
            sample_telegraph(RngState(0), params, max_jumps=100)

    def test_sample_positions_shape_and_speed(self, unit_params):
        times = [0.0, 0.5, 2.0]
        positions = sample_positions(RngState(4), unit_params, times, 500)
        assert positions.shape == (500, 3)
        np.testing.assert_array_equal(positions[:, 0], 0.0)
        assert np.all(np.abs(positions) <= np.array(times) + 1e-12)

    def test_sample_positions_rejects_negative_time(self, unit_params):
        with pytest.raises(InvalidParameterError):
            sample_positions(RngState(4), unit_params, [-1.0], 10)

    @pytest.mark.statistical
    @pytest.mark.parametrize("t", [0.25, 1.0, 4.0])
    def test_position_moments(self, t):
        params = ScalingParams(v0=1.5, lam=2.0, L=1.0, T=t)
        x = sample_positions(RngState(5), params, [t], 200_000)[:, 0]
        se = x.std(ddof=1) / math.sqrt(x.size)
        assert abs(x.mean() - mean_exact(t, params)) < K_SE * se
        sq = x ** 2
        assert abs(sq.mean() - second_moment_exact(t, params)) < K_SE * sq.std(ddof=1) / math.sqrt(x.size)

    @pytest.mark.statistical
    def test_jump_count_poisson_mean(self, unit_params):
        counts = np.array([sample_telegraph(RngState(6, i), unit_params).n_segments - 1
                           for i in range(4000)])
        se = counts.std(ddof=1) / math.sqrt(counts.size)
        assert abs(counts.mean() - 5.0) < K_SE * se


class TestClosedForms:
    """封閉形式動差與界限測試"""

    def test_variance_consistent(self, unit_params):
        t = np.array([0.1, 1.0, 10.0])
        np.testing.assert_allclose(
            variance_exact(t, unit_params),
            second_moment_exact(t, unit_params) - np.asarray(mean_exact(t, unit_params)) ** 2,
            rtol=1e-10,
        )

    def test_small_time_ballistic(self, unit_params):
        """短時間內近似直線運動"""
        t = 1e-4
        assert mean_exact(t, unit_params) == pytest.approx(t, rel=1e-3)
        assert second_moment_exact(t, unit_params) == pytest.approx(t ** 2, rel=1e-3)

    def test_large_time_diffusive(self, unit_params):
        t = 1e4
        assert variance_exact(t, unit_params) / t == pytest.approx(1.0, rel=1e-3)

    def test_scalar_return(self, unit_params):
        assert isinstance(mean_exact(1.0, unit_params), float)

    def test_gaussian_abs_moment(self):
        assert gaussian_abs_moment(2.0) == pytest.approx(1.0)
        assert gaussian_abs_moment(1.0) == pytest.approx(math.sqrt(2.0 / math.pi))
        assert gaussian_abs_moment(4.0) == pytest.approx(3.0)
        with pytest.raises(InvalidParameterError):
            gaussian_abs_moment(-1.0)

    def test_abs_moment_bound_capped_by_speed(self, unit_params):
        assert abs_moment_bound(0.01, 2.0, unit_params, 1.0) == pytest.approx(0.01 ** 2)

    def test_second_moment_within_bound(self, unit_params):
        """r = 2 時封閉形式滿足界限"""
        for t in (0.1, 1.0, 10.0, 100.0):
            assert second_moment_exact(t, unit_params) <= abs_moment_bound(t, 2.0, unit_params, 1.0)

    def test_calibration_non_negative(self, unit_params):
        constant = calibrate_abs_moment_constant(2.0, RngState(7), unit_params,
                                                 times=[0.5, 2.0], n_paths=2000)
        assert constant >= 0.0
