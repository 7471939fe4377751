"""Shared exception types, mapped to CLI exit codes (2 = data, 3 = numeric)."""


class DataError(Exception):
    """Malformed, missing or inconsistent input data."""


class NumericError(Exception):
    """A computation could not produce a meaningful result."""
