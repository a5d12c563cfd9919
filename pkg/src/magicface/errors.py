"""Exception hierarchy shared by every magicface module."""


class MagicFaceError(Exception):
    """Base class for all errors raised by this package."""


class IoError(MagicFaceError):
    """Filesystem operation failed (missing directory, unwritable path, ...)."""


class FormatError(MagicFaceError):
    """A container file is corrupt or violates its format contract."""


class ShapeError(MagicFaceError):
    """Array arguments have incompatible shapes or channel counts."""


class GeometryError(MagicFaceError):
    """Face geometry cannot be satisfied (canvas too small, clipping, degenerate landmarks)."""


class AssetError(MagicFaceError):
    """A referenced asset (sprite raster, dataset image) is missing or unreadable."""


class SchemaError(MagicFaceError):
    """A JSON manifest or config violates its schema (unknown keys, bad values)."""


class VocabError(MagicFaceError):
    """A prompt contains tokens outside the model vocabulary, or is empty."""


class ConfigError(MagicFaceError):
    """A configuration value is out of its documented range."""


class DivergenceError(MagicFaceError):
    """Training produced a non-finite loss."""

    def __init__(self, message, step=None):
        super().__init__(message)
        self.step = step


class NumericsError(MagicFaceError):
    """A numerical operation is undefined for the given inputs (e.g. division by zero scale)."""
