"""Exception hierarchy shared across the package.

The CLI maps these onto exit codes: ValidationError (and subclasses) -> 1,
NumericError -> 2.
"""


class PetcastError(Exception):
    """Base class for all errors raised by this package."""


class ValidationError(PetcastError):
    """Malformed input data, bad configuration, or a violated precondition."""


class FormatError(ValidationError):
    """A file does not conform to its documented line format."""

    def __init__(self, message, line_number=None):
        if line_number is not None:
            message = f"line {line_number}: {message}"
        super().__init__(message)
        self.line_number = line_number


class StateError(PetcastError):
    """An operation was called before its object reached the required state."""


class NumericError(PetcastError):
    """A numerical routine failed to produce a finite, converged result."""
