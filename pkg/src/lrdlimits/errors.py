"""Exception hierarchy. Each class carries the process exit code the CLI maps it to."""


class LrdError(Exception):
    exit_code = 1


class ValidationError(LrdError):
    """Bad parameters or preconditions violated before any numerics ran."""

    exit_code = 2


class CapacityError(ValidationError):
    """An exact integer quantity exceeds what float64 arithmetic can carry."""


class NumericalError(LrdError):
    """Quadrature or eigensolver failed to converge."""

    exit_code = 3


class AccuracyError(LrdError):
    """A computed quantity carries an error estimate above its contract."""

    exit_code = 3


class ConsistencyError(LrdError):
    """Two routes to the same quantity disagree beyond tolerance."""

    exit_code = 4
