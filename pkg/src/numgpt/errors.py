"""Exception types shared across the package.

The CLI maps these onto exit codes: UsageError -> 1, DataError -> 2,
NumericError (from core) -> 3.
"""


class UsageError(ValueError):
    """Caller violated a precondition (bad arguments, bad call sequence)."""


class DataError(ValueError):
    """Input data is malformed or inconsistent."""


class GenerationError(DataError):
    """Dataset generation could not satisfy its constraints."""


class IngestError(DataError):
    """A dataset file could not be ingested."""


class DecodeError(DataError):
    """A token id sequence could not be decoded."""
