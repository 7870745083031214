"""Exception hierarchy shared across the package.

Exit-code mapping used by the CLI: usage errors exit 1, data errors exit 2,
internal invariant violations exit 3.
"""

from __future__ import annotations


class FactCtxError(Exception):
    """Base class for all package errors."""


class UsageError(FactCtxError):
    """Bad invocation: unknown flag, unknown config key, missing argument."""

    exit_code = 1


class DataError(FactCtxError):
    """Malformed or inconsistent input data."""

    exit_code = 2


class NotFoundError(DataError):
    """A requested entity, predicate, or fact does not exist in the graph."""


class AmbiguousFactError(DataError):
    """A fact spec matches more than one concrete path in the graph."""

    def __init__(self, message: str, facts=()):
        super().__init__(message)
        self.facts = list(facts)


class InternalError(FactCtxError):
    """An internal invariant was violated; indicates a bug, not bad input."""

    exit_code = 3
