"""Exception hierarchy shared across the engine."""

from __future__ import annotations


class EngineError(Exception):
    """Base class for every error raised by this package."""


class FormatError(EngineError, ValueError):
    """A byte stream or document does not conform to one of the on-disk formats."""


class UnsupportedVersionError(FormatError):
    """A file declares a format version this reader does not understand."""


class DataError(FormatError):
    """Payload values violate a data invariant (NaN/Inf in a tensor)."""

    def __init__(self, message: str, index: int):
        super().__init__(message)
        self.index = index


class TruncatedStreamError(EngineError, OSError):
    """A stream ended before the declared payload was fully read."""

    def __init__(self, message: str, offset: int):
        super().__init__(message)
        self.offset = offset


class GeometryError(EngineError, ValueError):
    """Spatial dimensions of two objects do not agree."""


class ParamError(EngineError, ValueError):
    """A parameter or configuration value violates its contract."""


class AdapterError(EngineError, RuntimeError):
    """The external segmenter subprocess failed or produced invalid output."""

    def __init__(self, reason: str, message: str = "", diagnostics: str = ""):
        detail = message or reason
        if diagnostics:
            detail = f"{detail}\n{diagnostics}"
        super().__init__(detail)
        self.reason = reason
        self.diagnostics = diagnostics
