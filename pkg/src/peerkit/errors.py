"""Exception types shared across the library."""

from __future__ import annotations


class PeerKitError(ValueError):
    """Base class for all library errors."""


class InvalidInputError(PeerKitError):
    """An argument violates a documented precondition."""


class InfeasibilityError(PeerKitError):
    """A requested assignment or quota cannot be satisfied by the instance."""
