"""
Parse quantities written with unit suffixes.

Scenario files express sizes, bandwidths, latencies and compute rates as
strings such as "12.5 GB/s", "32 GiB", "10 us" or "125 TFLOPS". Decimal
prefixes are powers of 1000 and binary prefixes powers of 1024. Bits per
second ("100 Gbps") are converted to bytes per second.

For Copyright information, please see LICENCE.
"""

import re
from enum import Enum
from numbers import Real

_QUANTITY = re.compile(r"^\s*([-+]?(?:\d+\.?\d*|\.\d+)(?:[eE][-+]?\d+)?)\s*(\S*)\s*$")

_BYTE_PREFIXES = {
    "": 1,
    "K": 10**3,
    "M": 10**6,
    "G": 10**9,
    "T": 10**12,
    "P": 10**15,
    "Ki": 2**10,
    "Mi": 2**20,
    "Gi": 2**30,
    "Ti": 2**40,
    "Pi": 2**50,
}

_TIME_UNITS = {"s": 1.0, "ms": 1e-3, "us": 1e-6, "µs": 1e-6, "ns": 1e-9}

_FLOP_PREFIXES = {"": 1, "K": 1e3, "M": 1e6, "G": 1e9, "T": 1e12, "P": 1e15}


class Dimension(Enum):
    """The kinds of quantity accepted in scenario files."""

    BYTES = "bytes"
    """A size in bytes."""

    BANDWIDTH = "bandwidth"
    """A rate in bytes per second."""

    TIME = "time"
    """A duration in seconds."""

    FLOPS = "flops"
    """A compute rate in floating point operations per second."""

    COUNT = "count"
    """A plain number without a unit."""


def _split(text):
    match = _QUANTITY.match(text)
    if not match:
        raise ValueError(f"cannot parse quantity {text!r}")

    number, unit = match.groups()
    if re.fullmatch(r"[-+]?\d+", number):
        return int(number), unit

    return float(number), unit


def _scale(number, factor):
    value = number * factor
    if isinstance(value, float) and value.is_integer():
        return int(value)

    return value


def parse_quantity(value, dimension: Dimension):
    """
    Convert a number or unit-suffixed string into base units.

    Args:
        value: A plain number (already in base units) or a string such as
          "11 GB/s".
        dimension: The kind of quantity expected.

    Returns:
    The value in bytes, bytes per second, seconds or FLOP/s. Byte sizes are
    returned as integers whenever the result is integral.
    """
    if isinstance(value, bool):
        raise TypeError("quantities must be numbers or strings")

    if isinstance(value, Real):
        return value

    if not isinstance(value, str):
        raise TypeError("quantities must be numbers or strings")

    number, unit = _split(value)
    if dimension is Dimension.COUNT:
        if unit:
            raise ValueError(f"{value!r} must not have a unit")

        return number

    if dimension is Dimension.TIME:
        if unit not in _TIME_UNITS:
            raise ValueError(f"unknown time unit in {value!r}")

        return number * _TIME_UNITS[unit]

    if dimension is Dimension.FLOPS:
        match = re.fullmatch(r"([KMGTP]?)FLOP(?:S|/s)", unit)
        if not match:
            raise ValueError(f"unknown compute unit in {value!r}")

        return number * _FLOP_PREFIXES[match.group(1)]

    if dimension is Dimension.BANDWIDTH:
        match = re.fullmatch(r"([KMGTP]?)bps", unit)
        if match:
            return number * _BYTE_PREFIXES[match.group(1)] / 8

        if not unit.endswith("/s"):
            raise ValueError(f"bandwidth {value!r} must be given per second")

        unit = unit[:-2]

    if not unit and dimension is Dimension.BYTES:
        return number

    match = re.fullmatch(r"([KMGTP]i?)?B", unit)
    if not match:
        raise ValueError(f"unknown byte unit in {value!r}")

    factor = _BYTE_PREFIXES[match.group(1) or ""]
    if dimension is Dimension.BYTES:
        return _scale(number, factor)

    return number * factor


def format_bytes(value):
    """Render a byte count with a binary prefix for human readable tables."""
    for prefix, factor in (("Ti", 2**40), ("Gi", 2**30), ("Mi", 2**20), ("Ki", 2**10)):
        if abs(value) >= factor:
            return f"{value / factor:.4g} {prefix}B"

    return f"{value:.4g} B"
