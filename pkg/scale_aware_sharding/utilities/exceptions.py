"""
Exception classes used by this library.

For Copyright information, please see LICENCE.
"""

import typing


class ShardingError(Exception):
    """
    Base class for errors raised by this library.
    """

    pass


class ValidationError(ShardingError):
    """
    Error raised when validating inputs.
    """

    pass


class NonDivisibleError(ValidationError):
    """
    Error raised when a group size does not divide the number of ranks.
    """

    pass


class OutOfRangeError(ValidationError):
    """
    Error raised when a numeric argument lies outside its permitted range.
    """

    pass


class ShapeError(ValidationError):
    """
    Error raised when a group does not line up with the node structure of a
    cluster.
    """

    pass


class SizeMismatchError(ValidationError):
    """
    Error raised when buffers taking part in one collective differ in size.
    """

    pass


class TypeMismatchError(ValidationError):
    """
    Error raised when buffers have an unsupported or inconsistent element type.
    """

    pass


class EmptyProfileError(ValidationError):
    """
    Error raised when a bandwidth lookup has neither a table nor a scalar.
    """

    pass


class ConfigError(ValidationError):
    """
    Error raised for an invalid scenario configuration.

    The field is the dotted path of the offending entry and line is the line
    it appears on in the scenario file, when known.
    """

    def __init__(
        self,
        message: str,
        field: typing.Optional[str] = None,
        line: typing.Optional[int] = None,
    ):
        self.field = field
        self.line = line
        prefix = ""
        if line is not None:
            prefix += f"line {line}: "

        if field is not None:
            prefix += f"{field}: "

        super().__init__(prefix + message)


class InfeasibleError(ShardingError):
    """
    Error raised when the model states cannot fit in device memory.
    """

    pass


class BoundaryViolationError(ShardingError):
    """
    Error raised when a synchronisation step is called at the wrong point of
    the gradient accumulation cycle.
    """

    pass


class VerificationError(ShardingError):
    """
    Error raised when a collective or schedule disagrees with its oracle.
    """

    pass
