"""Exception types shared across the package.

Validation problems derive from :class:`ValueError`, file-level problems from
:class:`OSError` or :class:`DataFormatError`, numerical failures from
:class:`NumericalError`. The command line maps each family to an exit code.
"""

from __future__ import annotations


class DataFormatError(ValueError):
    """A file exists but its content cannot be interpreted."""

    def __init__(self, message: str, path=None):
        super().__init__(f"{path}: {message}" if path is not None else message)
        self.path = path


class ConfigError(DataFormatError):
    """A configuration entry is missing or malformed."""

    def __init__(self, message: str, path=None, key: str | None = None):
        super().__init__(f"key {key!r}: {message}" if key else message, path)
        self.key = key


class DimensionMismatchError(DataFormatError):
    """Images of one light field disagree in size or channel count."""


class NumericalError(RuntimeError):
    """An iterative or linear-algebra step failed to produce a usable result."""
