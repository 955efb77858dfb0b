"""Toolkit-wide exception types."""


class ValidationError(ValueError):
    """Bad input data or configuration; maps to CLI exit code 1."""
