"""Shared exception types; the CLI maps these to exit code 3."""


class QtmtError(Exception):
    """Base class for all domain errors raised by this package."""


class GeometryError(QtmtError):
    """Invalid CU geometry or an unavailable split."""


class MapEncodingError(QtmtError):
    """Label maps that do not encode a legal partition."""


class FormatError(QtmtError):
    """Malformed or truncated binary/CSV artifacts."""
