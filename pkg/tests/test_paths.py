"""
分段路徑測試

Author: Leon Lu
Created: 2025-01-24
"""

import numpy as np
import pytest

from src.modules.errors import InvalidParameterError
from src.modules.paths import PathKind, PiecewisePath


class TestConstruction:
    """路徑建構測試"""

    def test_ray(self):
        path = PiecewisePath.ray(2.0, 3.0)
        assert path.kind == PathKind.LINEAR
        assert path.evaluate(1.5) == pytest.approx(3.0)
        assert path.final_value == pytest.approx(6.0)

    def test_zero(self):
        path = PiecewisePath.zero(5.0)
        np.testing.assert_array_equal(path.evaluate(np.array([0.0, 2.5, 5.0])), 0.0)

    def test_step_drops_jumps_beyond_horizon(self):
        """超出時間區間的跳躍會被捨棄"""
        path = PiecewisePath.step([0.5, 1.0, 3.0], [1.0, -2.0, 5.0], 2.0)
        assert path.n_segments == 3
        assert path.final_value == pytest.approx(-1.0)

    def test_step_right_continuous(self):
        """階梯路徑右連續，左極限取跳躍前的值"""
        path = PiecewisePath.step([1.0], [3.0], 2.0)
        assert path.evaluate(1.0) == 3.0
        assert path.left_limit(1.0) == 0.0
        assert path(0.999) == 0.0

    def test_sampled_interpolates(self):
        path = PiecewisePath.sampled([0.0, 1.0, 2.0], [0.0, 2.0, 0.0], 2.0)
        assert path.evaluate(0.5) == pytest.approx(1.0)
        assert path.evaluate(1.5) == pytest.approx(1.0)

    def test_sampled_constant_after_last_sample(self):
        path = PiecewisePath.sampled([0.0, 1.0], [0.0, 2.0], 3.0)
        assert path.evaluate(2.5) == pytest.approx(2.0)


class TestValidation:
    """路徑驗證測試"""

    def test_first_breakpoint_must_be_zero(self):
        with pytest.raises(InvalidParameterError):
            PiecewisePath(np.array([0.1]), np.zeros(1), np.zeros(1), PathKind.STEP, 1.0)

    def test_breakpoints_strictly_increasing(self):
        with pytest.raises(InvalidParameterError):
            PiecewisePath(np.array([0.0, 0.5, 0.5]), np.zeros(3), np.zeros(3), PathKind.STEP, 1.0)

    def test_linear_must_be_continuous(self):
        """分段線性路徑在斷點處必須連續"""
        with pytest.raises(InvalidParameterError):
            PiecewisePath(np.array([0.0, 1.0]), np.array([0.0, 5.0]), np.array([1.0, -1.0]),
                          PathKind.LINEAR, 2.0)

    def test_step_slopes_zero(self):
        with pytest.raises(InvalidParameterError):
            PiecewisePath(np.zeros(1), np.zeros(1), np.ones(1), PathKind.STEP, 1.0)

    def test_evaluate_outside_horizon(self):
        path = PiecewisePath.ray(1.0, 1.0)
        with pytest.raises(InvalidParameterError):
            path.evaluate(1.5)
        with pytest.raises(InvalidParameterError):
            path.evaluate(-0.1)

    def test_arrays_are_read_only(self):
        path = PiecewisePath.ray(1.0, 1.0)
        with pytest.raises(ValueError):
            path.values[0] = 3.0


class TestTransforms:
    """路徑轉換與序列化測試"""

    @pytest.fixture
    def zigzag(self):
        """斜率 +1, -1 的鋸齒路徑"""
        return PiecewisePath(np.array([0.0, 1.0]), np.array([0.0, 1.0]),
                             np.array([1.0, -1.0]), PathKind.LINEAR, 3.0)

    def test_scale(self, zigzag):
        scaled = zigzag.scale(0.5)
        assert scaled.evaluate(1.0) == pytest.approx(0.5)
        assert scaled.final_value == pytest.approx(-0.5)

    def test_rescale_time_to_unit(self, zigzag):
        unit = zigzag.rescale_time_to_unit()
        assert unit.horizon == 1.0
        grid = np.linspace(0.0, 1.0, 7)
        np.testing.assert_allclose(unit.evaluate(grid), zigzag.evaluate(3.0 * grid))

    def test_json_roundtrip(self, zigzag):
        restored = PiecewisePath.from_json(zigzag.to_json())
        assert restored.equals(zigzag)

    def test_from_dict_missing_field(self):
        with pytest.raises(InvalidParameterError):
            PiecewisePath.from_dict({'kind': 'step', 'horizon': 1.0})

    def test_equals_tolerance(self, zigzag):
        nudged = zigzag.scale(1.0 + 1e-13)
        assert not zigzag.equals(nudged)
        assert zigzag.equals(nudged, atol=1e-9)
