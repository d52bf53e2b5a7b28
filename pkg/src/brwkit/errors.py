"""Shared exception for resource guards (memory/time caps, starvation)."""


class GuardError(RuntimeError):
    """A resource guard tripped: the request is too large for this method."""
