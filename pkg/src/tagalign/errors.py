"""Exception hierarchy shared across the package.

The CLI maps these onto exit codes: usage/config problems exit 1,
malformed or inconsistent data exits 2, numeric failures exit 3.
"""


class TagAlignError(Exception):
    """Base class for every error raised by this package."""


class UsageError(TagAlignError):
    """Bad command-line arguments or an invalid request."""


class ConfigError(UsageError):
    """Unknown or malformed key in a run configuration file."""


class InputError(TagAlignError, ValueError):
    """An operation was called with inputs that violate its contract."""


class ShapeError(InputError):
    """Array shapes do not line up for the requested operation."""


class DataError(TagAlignError):
    """A file on disk is malformed, truncated, or inconsistent."""


class NumericError(TagAlignError, ArithmeticError):
    """A non-finite value appeared where finite math was required."""
