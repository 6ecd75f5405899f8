"""
路徑成本與 Wasserstein 估計測試

Author: Leon Lu
Created: 2025-01-24
"""

import math
from functools import partial

import numpy as np
import pandas as pd
import pytest

from src.modules.couplings import coinflip_pair, independent_pair
from src.modules.errors import InvalidParameterError, ReportIOError
from src.modules.paths import PiecewisePath
from src.modules.randkit import RngState
from src.modules.telegraph import ScalingParams
from src.modules.transport import (
    average_quadratic_cost,
    empirical_w2_lower,
    empirical_w2_upper,
    empirical_wp_estimate,
    estimate_w2_from_costs,
    evaluation_grid,
    make_cost_samples,
    pair_cost,
    sample_costs,
    trapezoid_cost,
    wp_cost,
    write_cost_samples,
)


@pytest.fixture
def params():
    return ScalingParams.from_scaling(8.0, 2.0)


@pytest.fixture
def sampler(params):
    return partial(independent_pair, params=params, grid_points=16)


class TestPathCost:
    """平均二次成本測試"""

    def test_ray_against_zero(self):
        """(1/T)∫ t² dt = T²/3"""
        cost = average_quadratic_cost(PiecewisePath.ray(1.0, 3.0), PiecewisePath.zero(3.0))
        assert cost == pytest.approx(3.0)

    def test_step_against_zero(self):
        step = PiecewisePath.step(np.array([1.0]), np.array([2.0]), 2.0)
        assert average_quadratic_cost(step, PiecewisePath.zero(2.0)) == pytest.approx(2.0)

    def test_identical_paths(self, params):
        pair = coinflip_pair(RngState(1), params)
        assert average_quadratic_cost(pair.left, pair.left) == 0.0

    def test_horizon_mismatch(self):
        with pytest.raises(InvalidParameterError):
            average_quadratic_cost(PiecewisePath.zero(1.0), PiecewisePath.zero(2.0))

    def test_matches_trapezoid(self, params):
        """精確積分與細網格梯形法一致"""
        for stream in range(5):
            pair = independent_pair(RngState(2, stream), params, grid_points=64)
            exact = pair_cost(pair)
            assert trapezoid_cost(pair.left, pair.right) == pytest.approx(exact, rel=1e-3, abs=1e-9)

    def _sample_pairs(self, params):
        for stream in range(4):
            yield coinflip_pair(RngState(21, stream), params)
            yield independent_pair(RngState(22, stream), params, grid_points=32)

    def test_scale_equivariance(self, params):
        """c₂(aX, aY) = a² c₂(X, Y)"""
        for pair in self._sample_pairs(params):
            cost = pair_cost(pair)
            for a in (0.5, 3.0, -2.0):
                scaled = average_quadratic_cost(pair.left.scale(a), pair.right.scale(a))
                assert scaled == pytest.approx(a ** 2 * cost, rel=1e-10, abs=1e-14)

    def test_time_change_to_unit_interval(self, params):
        """[0, T] 上的平均成本等於時間正規化後 [0, 1] 上的成本"""
        for pair in self._sample_pairs(params):
            cost = pair_cost(pair)
            unit = average_quadratic_cost(pair.left.rescale_time_to_unit(),
                                          pair.right.rescale_time_to_unit())
            assert unit == pytest.approx(cost, rel=1e-10, abs=1e-14)

    def test_symmetric(self, params):
        pair = independent_pair(RngState(3), params, grid_points=32)
        assert pair_cost(pair) == pytest.approx(average_quadratic_cost(pair.right, pair.left))

    def test_wp_cost(self):
        left, right = PiecewisePath.ray(1.0, 3.0), PiecewisePath.zero(3.0)
        assert wp_cost(left, right, p=1.0) == pytest.approx(math.sqrt(3.0))
        assert wp_cost(left, right) == pytest.approx(3.0)
        with pytest.raises(InvalidParameterError):
            wp_cost(left, right, p=2.5)

    def test_evaluation_grid_contains_breakpoints(self):
        step = PiecewisePath.step(np.array([0.3, 0.77]), np.array([1.0, -1.0]), 1.0)
        grid = evaluation_grid([step], 1.0, points=4)
        assert {0.3, 0.77, 0.5, 1.0} <= set(grid.tolist())


class TestReplicateSampling:
    """複本取樣測試"""

    def test_independent_of_partition(self, sampler):
        """結果與批次大小、平行工作數無關"""
        serial = sample_costs(sampler, 20, seed=5, n_jobs=1, batch_size=7)
        parallel = sample_costs(sampler, 20, seed=5, n_jobs=2, batch_size=5)
        np.testing.assert_array_equal(serial, parallel)

    def test_stream_offset(self, sampler):
        full = sample_costs(sampler, 8, seed=6)
        shifted = sample_costs(sampler, 3, seed=6, stream_offset=5)
        np.testing.assert_array_equal(full[5:], shifted)

    def test_upper_requires_replicates(self, sampler):
        with pytest.raises(InvalidParameterError):
            empirical_w2_upper(sampler, 50)

    def test_upper_estimate(self, sampler):
        estimate = empirical_w2_upper(sampler, 100, seed=7)
        assert estimate.n_replicates == 100
        assert estimate.point > 0
        assert estimate.is_finite


class TestEstimates:
    """估計值測試"""

    def test_sqrt_of_mean(self):
        estimate = estimate_w2_from_costs([4.0, 4.0, 4.0])
        assert estimate.point == pytest.approx(2.0)
        assert estimate.half_width_95 == 0.0

    def test_rejects_negative_costs(self):
        with pytest.raises(InvalidParameterError):
            estimate_w2_from_costs([1.0, -0.5])

    def test_wp_estimate(self):
        costs = [1.0, 4.0, 9.0]
        assert empirical_wp_estimate(costs, 1.0).point == pytest.approx(2.0)
        assert empirical_wp_estimate(costs, 2.0).point == pytest.approx(math.sqrt(14.0 / 3.0))
        with pytest.raises(InvalidParameterError):
            empirical_wp_estimate(costs, 0.5)


class TestLowerEstimate:
    """邊際最優傳輸下界測試"""

    @pytest.fixture
    def grid(self):
        return np.linspace(0.0, 1.0, 11)

    def test_identical_samples(self, grid):
        samples = RngState(8).generator().standard_normal((50, grid.size))
        estimate = empirical_w2_lower(samples, samples.copy(), grid)
        assert estimate.point == pytest.approx(0.0, abs=1e-12)

    def test_constant_shift(self, grid):
        """整體平移 c 時邊際距離恰為 c"""
        samples = RngState(9).generator().standard_normal((40, grid.size))
        estimate = empirical_w2_lower(samples, samples + 0.5, grid, bootstrap=0)
        assert estimate.point == pytest.approx(0.5)
        assert estimate.half_width_95 == 0.0

    def test_accepts_paths(self):
        paths = [PiecewisePath.ray(s, 1.0) for s in (1.0, 2.0, 3.0)]
        grid = np.array([0.0, 1.0])
        estimate = empirical_w2_lower(paths, [p.scale(0.0) for p in paths], grid, bootstrap=0)
        # W₂² 在 t=1 為 (1+4+9)/3，t=0 為 0；梯形平均後除以 T=1
        assert estimate.point == pytest.approx(math.sqrt(14.0 / 6.0))

    def test_bootstrap_deterministic(self, grid):
        gen = RngState(10).generator()
        a, b = gen.standard_normal((30, grid.size)), gen.standard_normal((30, grid.size))
        first = empirical_w2_lower(a, b, grid, seed=3)
        second = empirical_w2_lower(a, b, grid, seed=3)
        assert first.half_width_95 == second.half_width_95 > 0

    def test_sample_count_mismatch(self, grid):
        with pytest.raises(InvalidParameterError):
            empirical_w2_lower(np.zeros((3, grid.size)), np.zeros((4, grid.size)), grid)

    def test_column_mismatch(self, grid):
        with pytest.raises(InvalidParameterError):
            empirical_w2_lower(np.zeros((3, 2)), np.zeros((3, 2)), grid)


class TestCostSampleOutput:
    """成本樣本輸出測試"""

    def test_write_csv(self, tmp_path):
        samples = make_cost_samples([0.5, 1.25], 'chain', start=10)
        target = write_cost_samples(samples, tmp_path / 'out' / 'costs.csv')
        frame = pd.read_csv(target)
        assert list(frame.columns) == ['replicate_id', 'coupling_tag', 'cost']
        assert frame['replicate_id'].tolist() == [10, 11]
        assert frame['cost'].tolist() == [0.5, 1.25]

    def test_write_failure(self, tmp_path):
        with pytest.raises(ReportIOError):
            write_cost_samples(make_cost_samples([1.0], 'chain'), tmp_path)
