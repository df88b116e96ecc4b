"""Input validation utilities for the gbdm package.

This module provides validation functions and decorators for checking
arguments at the public boundaries of the library.
"""

from __future__ import annotations

import functools
import inspect
import math
from typing import TYPE_CHECKING, Any, ParamSpec, TypeVar

import numpy as np


if TYPE_CHECKING:
    from collections.abc import Callable

from gbdm.exceptions import ValidationError


# Type variables for generic decorators
P = ParamSpec("P")
R = TypeVar("R")


def validate_positive_int(value: int, field_name: str = "value") -> int:
    """Validate that a value is a positive integer.

    Args:
        value: The value to validate.
        field_name: The name of the field being validated (for error messages).

    Returns:
        The validated positive integer.

    Raises:
        ValidationError: If the value is not a positive integer.

    Examples:
        >>> validate_positive_int(5)
        5
    """
    if not isinstance(value, int | np.integer) or isinstance(value, bool):
        msg = "must be an integer"
        raise ValidationError(field=field_name, value=value, reason=msg)

    if value <= 0:
        msg = "must be a positive integer"
        raise ValidationError(field=field_name, value=value, reason=msg)

    return int(value)


def validate_positive_float(value: float, field_name: str = "value") -> float:
    """Validate that a value is a finite, strictly positive number.

    Examples:
        >>> validate_positive_float(0.1, "dt")
        0.1
    """
    value = float(value)
    if not math.isfinite(value) or value <= 0.0:
        raise ValidationError(field=field_name, value=value, reason="must be a finite positive number")
    return value


def validate_non_negative(value: float, field_name: str = "value") -> float:
    """Validate that a value is a finite number >= 0."""
    value = float(value)
    if not math.isfinite(value) or value < 0.0:
        raise ValidationError(field=field_name, value=value, reason="must be a finite non-negative number")
    return value


def validate_unit_interval(value: Any, field_name: str = "t") -> Any:  # noqa: ANN401
    """Validate that a scalar or every entry of an array lies in [0, 1].

    Args:
        value: A float, an array-like or a tensor of normalized times.
        field_name: The name of the field being validated.

    Returns:
        The value unchanged.

    Raises:
        ValidationError: If any entry is outside [0, 1] or not finite.

    Examples:
        >>> validate_unit_interval(0.5)
        0.5
    """
    arr = np.asarray(getattr(value, "data", value), dtype=np.float64)
    if not np.all(np.isfinite(arr)) or np.any(arr < 0.0) or np.any(arr > 1.0):
        raise ValidationError(field=field_name, value=value, reason="must lie in [0, 1]")
    return value


def validated(
    validator: Callable[[Any], Any],
    arg_name: str,
) -> Callable[[Callable[P, R]], Callable[P, R]]:
    """Decorator factory for validating function arguments.

    Creates a decorator that validates a specific argument using
    the provided validator function before calling the wrapped function.

    This decorator handles both positional and keyword arguments by using
    inspect.signature to bind arguments to their parameter names.

    Args:
        validator: The validation function to apply.
        arg_name: The name of the argument to validate.

    Returns:
        A decorator that validates the specified argument.

    Example:
        >>> @validated(validate_unit_interval, "t")
        ... def midpoint(a: float, b: float, t: float) -> float:
        ...     return (1 - t) * a + t * b
        >>> midpoint(0.0, 2.0, 0.5)
        1.0
    """

    def decorator(func: Callable[P, R]) -> Callable[P, R]:
        sig = inspect.signature(func)

        @functools.wraps(func)
        def wrapper(*args: P.args, **kwargs: P.kwargs) -> R:
            bound_args = sig.bind(*args, **kwargs)
            bound_args.apply_defaults()

            if arg_name in bound_args.arguments:
                bound_args.arguments[arg_name] = validator(bound_args.arguments[arg_name])

            return func(*bound_args.args, **bound_args.kwargs)

        return wrapper

    return decorator
