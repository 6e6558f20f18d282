"""Exception hierarchy.

The CLI maps :class:`ValidationError` to exit code 1 and
:class:`NumericalError` (including conditioning failures) to exit code 2.
"""


class BellDriftError(Exception):
    """Base class for all package errors."""


class ValidationError(BellDriftError, ValueError):
    """Input violates a documented precondition."""


class SchemaError(ValidationError):
    """A counts, calibration or config file does not match its schema."""

    def __init__(self, message, *, line=None, record=None):
        self.line = line
        self.record = record
        where = []
        if line is not None:
            where.append(f"line {line}")
        if record is not None:
            where.append(f"record {record}")
        if where:
            message = f"{message} ({', '.join(where)})"
        super().__init__(message)


class NumericalError(BellDriftError, ArithmeticError):
    """A computation is numerically unsafe (singular or ill-conditioned)."""


class ConditioningError(NumericalError):
    """Assignment matrix is singular or exceeds the condition-number gate."""

    def __init__(self, message, kappa=None):
        self.kappa = kappa
        super().__init__(message)


class PipelineError(BellDriftError):
    """Wraps an error raised inside a pipeline stage, recording the stage."""

    def __init__(self, stage, cause):
        self.stage = stage
        self.cause = cause
        super().__init__(f"[{stage}] {type(cause).__name__}: {cause}")
