"""Exception types shared across the package."""


class GeoplanError(Exception):
    """Base class for all package errors."""


class DimensionError(GeoplanError, ValueError):
    """Array shapes or dimensions do not agree."""


class ParameterError(GeoplanError, ValueError):
    """A scalar parameter is outside its valid range."""


class DegenerateInputError(GeoplanError, ValueError):
    """Input is geometrically or numerically degenerate (zero length, zero vector)."""


class PreconditionError(GeoplanError, ValueError):
    """Input violates a documented precondition of the operation."""


class NoPathError(GeoplanError):
    """Goal is not reachable from the start."""


class NodeLookupError(GeoplanError, KeyError):
    """Referenced node or cell id does not exist."""


class GenerationError(GeoplanError):
    """Procedural generation could not satisfy its constraints."""


class DivergenceError(GeoplanError, FloatingPointError):
    """Training produced non-finite or exploding values."""


class NumericError(GeoplanError, FloatingPointError):
    """Non-finite numeric input."""


class DataError(GeoplanError, ValueError):
    """Malformed or incomplete data record."""


class RasterFormatError(GeoplanError, OSError):
    """Raster file or its header sidecar is malformed."""
