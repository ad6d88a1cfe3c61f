"""
Utilities used throughout this library.

For Copyright information, please see LICENCE.
"""

from . import exceptions, units, validation  # noqa: F401
