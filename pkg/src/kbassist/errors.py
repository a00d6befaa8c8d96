"""Exceptions shared across provider-facing modules."""


class ProviderUnavailable(Exception):
    """Transport-level failure talking to a completion or embedding provider."""
