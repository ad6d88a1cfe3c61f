"""
Argument validation functions.

For Copyright information, please see LICENCE.
"""

from numbers import Integral, Real

from scale_aware_sharding.utilities.exceptions import OutOfRangeError


def validate_count(name, value, minimum=0):
    if isinstance(value, bool) or not isinstance(value, Integral):
        raise TypeError(f"{name} must be an integer")

    if value < minimum:
        raise OutOfRangeError(f"{name} must be at least {minimum}, got {value}")

    return int(value)


def validate_positive(name, value):
    if isinstance(value, bool) or not isinstance(value, Real):
        raise TypeError(f"{name} must be a number")

    if not value > 0:
        raise OutOfRangeError(f"{name} must be greater than 0, got {value}")

    return value


def validate_non_negative(name, value):
    if isinstance(value, bool) or not isinstance(value, Real):
        raise TypeError(f"{name} must be a number")

    if not value >= 0:
        raise OutOfRangeError(f"{name} must not be negative, got {value}")

    return value


def validate_fraction(name, value):
    validate_positive(name, value)
    if value > 1:
        raise OutOfRangeError(f"{name} must not exceed 1, got {value}")

    return value
