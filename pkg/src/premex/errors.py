"""Exception types shared across the package.

The CLI maps these onto exit codes: data validation failures exit 3,
I/O problems (plain OSError) exit 4, numeric failures exit 5.
"""


class PremexError(Exception):
    """Base class for errors raised by this package."""


class DataValidationError(PremexError):
    """Input data or a serialized artifact violates its contract."""


class FormatVersionError(DataValidationError):
    """A serialized artifact carries an unsupported format version."""


class NumericError(PremexError):
    """A computation is undefined for the given data (zero variance, ...)."""
