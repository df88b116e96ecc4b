"""Tests for validators module."""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gbdm.exceptions import ValidationError
from gbdm.validators import (
    validate_non_negative,
    validate_positive_float,
    validate_positive_int,
    validate_unit_interval,
    validated,
)


class TestValidatePositiveInt:
    """Test cases for validate_positive_int function."""

    @pytest.mark.unit
    def test_valid_positive_int(self) -> None:
        """Test validation of positive integers."""
        assert validate_positive_int(1) == 1
        assert validate_positive_int(100) == 100

    @pytest.mark.unit
    def test_numpy_integer_accepted(self) -> None:
        """Test that numpy integers are converted to int."""
        value = validate_positive_int(np.int64(7))
        assert value == 7
        assert type(value) is int

    @pytest.mark.unit
    @pytest.mark.parametrize("value", [0, -5])
    def test_non_positive_raises(self, value: int) -> None:
        """Test that zero and negatives raise ValidationError."""
        with pytest.raises(ValidationError) as exc_info:
            validate_positive_int(value)
        assert "positive" in exc_info.value.reason

    @pytest.mark.unit
    def test_float_raises(self) -> None:
        """Test that float raises ValidationError."""
        with pytest.raises(ValidationError) as exc_info:
            validate_positive_int(5.0)  # type: ignore[arg-type]
        assert "integer" in exc_info.value.reason

    @pytest.mark.unit
    def test_bool_raises(self) -> None:
        """Test that bool raises ValidationError."""
        with pytest.raises(ValidationError):
            validate_positive_int(True)  # noqa: FBT003

    @pytest.mark.unit
    def test_custom_field_name(self) -> None:
        """Test custom field name in error."""
        with pytest.raises(ValidationError) as exc_info:
            validate_positive_int(0, field_name="n_traj")
        assert exc_info.value.field == "n_traj"

    @pytest.mark.unit
    @given(st.integers(min_value=1, max_value=10000))
    @settings(max_examples=50)
    def test_hypothesis_positive_integers(self, value: int) -> None:
        """Property-based test for positive integers."""
        assert validate_positive_int(value) == value


class TestValidateFloats:
    """Test cases for the float validators."""

    @pytest.mark.unit
    def test_positive_float(self) -> None:
        """Test a valid step size."""
        assert validate_positive_float(0.0339, "dt") == 0.0339

    @pytest.mark.unit
    @pytest.mark.parametrize("value", [0.0, -1.0, math.inf, math.nan])
    def test_positive_float_rejects(self, value: float) -> None:
        """Test that zero, negatives and non-finite values raise."""
        with pytest.raises(ValidationError):
            validate_positive_float(value, "lr")

    @pytest.mark.unit
    def test_non_negative_accepts_zero(self) -> None:
        """Test that zero is a valid non-negative value."""
        assert validate_non_negative(0.0, "alpha") == 0.0

    @pytest.mark.unit
    def test_non_negative_rejects_negative(self) -> None:
        """Test that negatives raise."""
        with pytest.raises(ValidationError) as exc_info:
            validate_non_negative(-0.1, "sigma")
        assert exc_info.value.field == "sigma"

    @pytest.mark.unit
    @given(st.floats(min_value=1e-12, max_value=1e12))
    @settings(max_examples=50)
    def test_hypothesis_positive_floats(self, value: float) -> None:
        """Property-based test for positive floats."""
        assert validate_positive_float(value) == value


class TestValidateUnitInterval:
    """Test cases for validate_unit_interval function."""

    @pytest.mark.unit
    @pytest.mark.parametrize("value", [0.0, 0.5, 1.0])
    def test_scalars_inside(self, value: float) -> None:
        """Test endpoints and interior points."""
        assert validate_unit_interval(value) == value

    @pytest.mark.unit
    def test_array_returned_unchanged(self) -> None:
        """Test that arrays pass through as the same object."""
        t = np.array([0.0, 0.25, 1.0])
        assert validate_unit_interval(t) is t

    @pytest.mark.unit
    @pytest.mark.parametrize("value", [-0.01, 1.01, math.nan])
    def test_outside_raises(self, value: float) -> None:
        """Test values outside [0, 1]."""
        with pytest.raises(ValidationError):
            validate_unit_interval(value)

    @pytest.mark.unit
    def test_one_bad_entry_raises(self) -> None:
        """Test that a single bad entry rejects the array."""
        with pytest.raises(ValidationError):
            validate_unit_interval(np.array([0.2, 1.5]))


class TestValidatedDecorator:
    """Test cases for validated decorator."""

    @pytest.mark.unit
    def test_decorator_validates_kwarg(self) -> None:
        """Test that decorator validates keyword argument."""

        @validated(validate_unit_interval, "t")
        def midpoint(a: float, b: float, t: float = 0.5) -> float:
            return (1 - t) * a + t * b

        assert midpoint(0.0, 2.0, t=0.25) == 0.5
        with pytest.raises(ValidationError):
            midpoint(0.0, 2.0, t=2.0)

    @pytest.mark.unit
    def test_decorator_with_positional_args(self) -> None:
        """Test that decorator validates positional arguments."""

        @validated(validate_unit_interval, "t")
        def midpoint(a: float, b: float, t: float = 0.5) -> float:
            return (1 - t) * a + t * b

        with pytest.raises(ValidationError):
            midpoint(0.0, 2.0, -1.0)

    @pytest.mark.unit
    def test_decorator_applies_defaults(self) -> None:
        """Test that default values are validated and used."""

        @validated(validate_positive_int, "n")
        def repeat(text: str, n: int = 2) -> str:
            return text * n

        assert repeat("ab") == "abab"

    @pytest.mark.unit
    def test_decorator_preserves_function_metadata(self) -> None:
        """Test that decorator preserves function metadata."""

        @validated(validate_positive_int, "n")
        def my_function(n: int = 1) -> int:
            """My docstring."""
            return n

        assert my_function.__name__ == "my_function"
        assert my_function.__doc__ == "My docstring."

    @pytest.mark.unit
    def test_decorator_with_different_arg_name(self) -> None:
        """Test decorator when arg_name doesn't match function parameters."""

        @validated(validate_positive_int, "nonexistent_param")
        def identity(n: int) -> int:
            return n

        assert identity(-3) == -3
