"""
錯誤分類與參數驗證測試

Author: Leon Lu
Created: 2025-01-25
"""

import math

import numpy as np
import pytest

from src.config import ConfigError
from src.modules.errors import (
    EXIT_CODES,
    ErrorCategory,
    ExperimentFailure,
    InvalidParameterError,
    NumericResolutionError,
    ReportIOError,
    ResourceLimitError,
    TelecouplerError,
    describe_error,
    require_finite_array,
    require_non_negative,
    require_positive,
    require_positive_int,
    require_probability,
)


class TestExceptionHierarchy:
    """例外類別階層測試"""

    def test_subclasses_share_base(self):
        """所有例外皆繼承基底類別"""
        for cls in (InvalidParameterError, ResourceLimitError, NumericResolutionError,
                    ExperimentFailure, ReportIOError):
            assert issubclass(cls, TelecouplerError)

    def test_invalid_parameter_is_value_error(self):
        """參數錯誤同時是 ValueError"""
        with pytest.raises(ValueError):
            raise InvalidParameterError("bad")

    def test_details_default_empty(self):
        error = ExperimentFailure("row failed")
        assert error.details == {}
        assert error.message == "row failed"


class TestDescribeError:
    """錯誤分類與退出碼測試"""

    @pytest.mark.parametrize("exc, code", [
        (InvalidParameterError("x"), 2),
        (ResourceLimitError("x"), 3),
        (NumericResolutionError("x"), 3),
        (ExperimentFailure("x"), 1),
        (ReportIOError("x"), 4),
        (ConfigError("x"), 2),
        (PermissionError("x"), 4),
        (ValueError("x"), 2),
    ])
    def test_exit_codes(self, exc, code):
        assert describe_error(exc).exit_code == code

    def test_unknown_error(self):
        info = describe_error(RuntimeError("boom"))
        assert info.category == ErrorCategory.UNKNOWN_ERROR
        assert info.details['type'] == 'RuntimeError'

    def test_suggestions_present(self):
        """已知分類附帶修正建議"""
        info = describe_error(NumericResolutionError("mass defect", {'m': 4}))
        assert info.suggested_fixes
        assert info.details == {'m': 4}

    def test_every_category_has_exit_code(self):
        assert set(EXIT_CODES) == set(ErrorCategory)


class TestValidators:
    """前置條件驗證測試"""

    def test_require_positive(self):
        assert require_positive('a', 2) == 2.0
        for bad in (0, -1, math.inf, math.nan, 'x', None):
            with pytest.raises(InvalidParameterError):
                require_positive('a', bad)

    def test_require_non_negative(self):
        assert require_non_negative('a', 0) == 0.0
        with pytest.raises(InvalidParameterError):
            require_non_negative('a', -1e-300)

    def test_require_positive_int(self):
        assert require_positive_int('n', 3) == 3
        assert require_positive_int('n', np.int64(5)) == 5
        assert require_positive_int('n', 4.0) == 4
        assert require_positive_int('n', 0, minimum=0) == 0
        for bad in (0, 2.5, True, '3'):
            with pytest.raises(InvalidParameterError):
                require_positive_int('n', bad)

    def test_require_positive_int_minimum(self):
        with pytest.raises(InvalidParameterError):
            require_positive_int('replicates', 99, minimum=100)

    def test_require_finite_array(self):
        np.testing.assert_array_equal(require_finite_array('x', [1, 2]), [1.0, 2.0])
        with pytest.raises(InvalidParameterError):
            require_finite_array('x', [1.0, np.nan])
        with pytest.raises(InvalidParameterError):
            require_finite_array('x', np.ones((2, 2)))

    def test_require_probability(self):
        assert require_probability('p', 1.0) == 1.0
        with pytest.raises(InvalidParameterError):
            require_probability('p', 1.5)
