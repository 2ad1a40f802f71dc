"""Exception taxonomy shared by every module.

Errors carry a short machine-readable message first so callers (and the HTTP
layer) can match on substrings like "photo-required" without parsing prose.
"""

from __future__ import annotations


class RouteTrainerError(Exception):
    """Base class for every domain error raised by this package."""


class ContractViolation(RouteTrainerError):
    """An argument broke a documented precondition (bad range, empty window)."""


class InsufficientData(RouteTrainerError):
    """Not enough input to produce a meaningful result (e.g. < 2 fixes)."""


class OrderingError(RouteTrainerError):
    """Timestamps or sequence numbers went backwards."""


class StateError(RouteTrainerError):
    """Operation not allowed in the entity's current lifecycle state."""


class NotFoundError(RouteTrainerError):
    """Referenced entity, asset, or option does not exist."""


class ValidationFailed(RouteTrainerError):
    """A route failed validation where a valid one was required."""

    def __init__(self, report):
        self.report = report
        codes = ", ".join(v.code for v in report.violations)
        super().__init__(f"route validation failed: {codes}")


class EditRejected(RouteTrainerError):
    """A curation edit would have produced an invalid route; nothing changed."""


class IncompleteNegotiation(RouteTrainerError):
    """Finalization attempted before every POI was decided."""


class ConsentError(RouteTrainerError):
    """Consent missing, spent, expired, or lacking a disclosure."""


class ModalityError(RouteTrainerError):
    """Modality set unusable (e.g. AR without a primary channel)."""


class RoleError(RouteTrainerError):
    """Actor role does not match the session's supervision level."""


class ClassificationError(RouteTrainerError):
    """Unknown data kind, or a kind that may never reach the destination."""


class SyncPolicyError(RouteTrainerError):
    """Strict sync gate rejected a manifest; names the offending items."""

    def __init__(self, message: str, offending: tuple[str, ...] = ()):
        self.offending = tuple(offending)
        super().__init__(message)


class IntegrityError(RouteTrainerError):
    """Stored data is corrupt: bad hash, truncated file, unpaired episodes."""


class ConflictError(RouteTrainerError):
    """Optimistic version check failed; somebody else wrote first."""


class ProfileError(RouteTrainerError):
    """Walker profile is internally inconsistent (overlapping behaviors)."""


class InputError(RouteTrainerError):
    """Inputs that cannot be combined (e.g. trend across different ways)."""


class FeedUnavailableError(RouteTrainerError):
    """A remote-supervised session requires the live feed, which is down."""
