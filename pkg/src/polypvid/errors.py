"""Exception hierarchy shared across the package."""


class PolypVidError(Exception):
    """Base class for package errors."""


class ConfigError(PolypVidError, ValueError):
    """Invalid configuration or argument."""


class DataError(PolypVidError):
    """Malformed, missing or inconsistent input data."""


class ShapeError(PolypVidError, ValueError):
    """Array or tensor dimensions do not match what was expected."""


class InvalidRegionError(PolypVidError, ValueError):
    pass


class LayoutError(PolypVidError, ValueError):
    """A latent slice does not fit the active slot layout."""


class OrderingError(PolypVidError, ValueError):
    """Frames pushed out of temporal order."""


class DegenerateCropError(DataError):
    pass


class CoverageError(DataError):
    """Detections do not cover every frame of the dataset."""
