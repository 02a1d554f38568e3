"""Shared exception types."""


class NumericsError(RuntimeError):
    """Numerical failure: solver blow-up, NaN loss or gradients."""


class ConfigError(ValueError):
    """Invalid or inconsistent configuration."""
