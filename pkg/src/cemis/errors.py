"""Exception taxonomy.

Every error carries a stable machine-parsable ``category`` string so the CLI
and API can map failures to exit codes / HTTP statuses without string-matching
human-readable messages.
"""

from __future__ import annotations


class CemisError(Exception):
    """Base class for all domain errors."""

    category = "error"

    def __init__(self, message: str, *, category: str | None = None):
        super().__init__(message)
        if category is not None:
            self.category = category


class ValidationError(CemisError):
    category = "validation"


class NotFoundError(CemisError):
    category = "not_found"


class PlanningError(CemisError):
    """Quota arithmetic cannot satisfy the requested balance."""

    category = "sampling.planning"


class StratumError(CemisError):
    """A stratum in the pool cannot cover its quota; names the cell."""

    category = "sampling.stratum"


class PairingError(CemisError):
    category = "sampling.pairing"


class GroupingError(CemisError):
    category = "sampling.grouping"


class ManifestError(CemisError):
    category = "manifest.schema"


class OrderingError(CemisError):
    """Submission does not target the session cursor's task."""

    category = "session.ordering"


class ImmutabilityError(CemisError):
    """Attempt to change an already accepted response."""

    category = "session.immutability"


class AuthError(CemisError):
    category = "auth"


class ForbiddenError(AuthError):
    """Authenticated caller touching a resource outside its session scope."""

    category = "auth.forbidden"


class LogCorruptError(CemisError):
    """Response log failed checksum or sequence validation on replay."""

    category = "storage.corrupt"

    def __init__(self, message: str, *, seq: int | None = None, offset: int | None = None):
        super().__init__(message)
        self.seq = seq
        self.offset = offset


class UnsupportedError(CemisError):
    category = "unsupported"


class EmptyReportError(CemisError):
    """Report requested before any responses exist."""

    category = "reporting.empty"
