"""Exception hierarchy.

Every error raised on purpose by the package derives from
:class:`DecayGraphError`, so callers can catch one type at the boundary.
"""

from __future__ import annotations


class DecayGraphError(Exception):
    """Base class for all package errors."""


class DataError(DecayGraphError, ValueError):
    """A raw value cannot be used (NaN, non-numeric, missing field).

    ``path``, ``line`` and ``field`` are filled in by the readers so the
    message can point at the offending input.
    """

    def __init__(self, message: str, *, path=None, line=None, field=None):
        self.path = path
        self.line = line
        self.field = field
        where = []
        if path is not None:
            where.append(str(path))
        if line is not None:
            where.append(f"line {line}")
        if field is not None:
            where.append(f"field {field!r}")
        if where:
            message = f"{', '.join(where)}: {message}"
        super().__init__(message)


class StructuralError(DecayGraphError, ValueError):
    """Shapes or layouts of two objects do not agree."""


class FitError(DecayGraphError, ValueError):
    """Bin fitting was asked to work on unusable input."""


class TimeOrderError(DataError):
    """Time went backwards, either in a stream or in a time difference."""


class PreconditionError(DecayGraphError, ValueError):
    """An oracle received input outside the case it can check."""


class SnapshotError(DecayGraphError):
    """A snapshot cannot be restored (version or hash mismatch)."""


class ConfigError(DecayGraphError, ValueError):
    """A run configuration is malformed or inconsistent."""
