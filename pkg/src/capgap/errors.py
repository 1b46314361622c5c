"""Exception types shared across modules."""

from __future__ import annotations

from typing import Any, Sequence


class CapgapError(Exception):
    """Base class for all package errors."""


class PreconditionError(CapgapError):
    """An operation was called with arguments violating its preconditions."""


class StateError(CapgapError):
    """An operation was attempted in an incompatible state."""


class VersionConflictError(StateError):
    """Optimistic-concurrency check failed: the value changed underneath."""


class TransportError(CapgapError):
    """Network-level failure talking to a remote backend; retryable."""


class ResponseFormatError(CapgapError):
    """Terminal problem with a backend response body."""


class ParseError(ResponseFormatError):
    """Response body is not parseable as the expected structure."""


class SchemaError(ResponseFormatError):
    """Response parsed but required fields are missing or mistyped."""


class RangeError(ResponseFormatError):
    """A parsed score falls outside [0, 1]."""


class ReplayMissError(CapgapError):
    """The replay backend has no recording for this call."""


class DecompositionError(CapgapError):
    """Backend produced a subgoal set that fails structural validation."""

    def __init__(self, message: str, violations: Sequence[Any] = ()) -> None:
        super().__init__(message)
        self.violations = list(violations)


class UndefinedMeanError(CapgapError):
    """No ok records exist to average."""


class PartialResultError(CapgapError):
    """Operation could not finish cleanly; the partial result rides along."""

    def __init__(self, message: str, partial: Any) -> None:
        super().__init__(message)
        self.partial = partial


class ShortfallError(CapgapError):
    """Pool construction could not fill a slice."""

    def __init__(self, slice_name: str, deficit: int) -> None:
        super().__init__(f"slice {slice_name!r} is short {deficit} sample(s)")
        self.slice_name = slice_name
        self.deficit = deficit


class StorageError(CapgapError):
    """Persistent-store failure (unreadable file, unwritable path, bad line)."""
