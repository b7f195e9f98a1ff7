"""Exception types shared by the ota-inverse modules.

The CLI maps these onto exit codes, so every failure a library function can
raise on bad input or bad numerics derives from OtaInverseError.
"""

from typing import Type


class OtaInverseError(Exception):
    """Base class for all library errors."""


class ParameterError(OtaInverseError, ValueError):
    """An argument is outside its allowed range."""


class ShapeError(OtaInverseError, ValueError):
    """Matrix or vector dimensions do not fit together."""


class DomainError(OtaInverseError, ValueError):
    """A closed-form bound or probability is undefined for the given inputs."""


class ComputationError(OtaInverseError, ArithmeticError):
    """A numerical routine failed to converge or produced non-finite output."""


class EstimationError(ComputationError):
    """A Monte-Carlo estimate could not be formed (e.g. every draw was singular)."""


class UsageError(OtaInverseError):
    """Invalid command-line or configuration input."""


def require(condition: bool, message: str,
            error: Type[OtaInverseError] = ParameterError) -> None:
    """Raise `error(message)` unless `condition` holds."""
    if not condition:
        raise error(message)
