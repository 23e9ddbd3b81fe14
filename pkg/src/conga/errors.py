"""Exception hierarchy.

Input problems (bad files, bad flags, invalid parameters) derive from
:class:`InputError`; numerical failures derive from :class:`NumericError`.
The CLI maps these to exit codes 2 and 3 respectively.
"""


class CongaError(Exception):
    """Base class for all package errors."""


class InputError(CongaError, ValueError):
    """Malformed input data or configuration."""


class ParameterError(InputError):
    """A model or search parameter is outside its valid range."""


class ShapeError(InputError):
    """Array dimensions do not agree."""


class ParseError(InputError):
    """A counts CSV or samples file could not be parsed."""

    def __init__(self, message, row=None, column=None):
        if row is not None:
            loc = f"row {row}" + (f", column {column}" if column is not None else "")
            message = f"{message} ({loc})"
        super().__init__(message)
        self.row = row
        self.column = column


class InsufficientDataError(InputError):
    """Too few observations for the requested computation."""


class NumericError(CongaError, ArithmeticError):
    """A numerical computation failed or cannot be trusted."""


class TruncationError(NumericError):
    """An observed count exceeds the truncation level B."""

    def __init__(self, message, row=None, column=None, value=None):
        super().__init__(message)
        self.row = row
        self.column = column
        self.value = value


class GenerationError(NumericError):
    """Synthetic data generation failed (e.g. non-PD precision matrix)."""
