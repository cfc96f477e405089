"""Typed errors raised by the pipeline.

Every malformed input or violated precondition maps to one of these; callers
(CLI, HTTP service) translate them into exit codes / status codes by class.
"""


class BathysegError(Exception):
    """Base class for all pipeline errors."""


# --- raster parsing / serialization -----------------------------------------

class MalformedHeader(BathysegError):
    """File header is absent, truncated, or self-inconsistent."""


class InconsistentDimensions(BathysegError):
    """Declared dimensions disagree with the payload."""


class UnsupportedTiffFeature(BathysegError):
    """TIFF uses compression, a non-float sample type, or multiple bands."""


class EmptyInput(BathysegError):
    """Input holds no data at all."""


class UnwritableFormat(BathysegError):
    """Requested output format has no writer."""


class DegenerateRange(BathysegError):
    """lo >= hi in a rendering range."""


# --- preprocessing ------------------------------------------------------------

class ResolutionTooCoarse(BathysegError):
    """Pixel size too coarse for the requested chunk extent."""


class AllNodata(BathysegError):
    """Operation needs at least one valid pixel."""


# --- synthetic data -----------------------------------------------------------

class EmptyLabel(BathysegError):
    """Label mask contains no ship pixels."""


class ShipOnNodata(BathysegError):
    """Ship label overlaps nodata cells."""


class NoValidPlacement(BathysegError):
    """No position keeps the ship footprint inside valid terrain."""


class InsufficientInputs(BathysegError):
    """Dataset build requested more kinds of samples than inputs allow."""


# --- network ------------------------------------------------------------------

class ShapeMismatch(BathysegError):
    """Tensor or mask shapes are inconsistent."""


class EmptyManifest(BathysegError):
    """Training needs at least one train and one val entry."""


class WeightsFormatError(BathysegError):
    """Weights file cannot be decoded."""


class BadMagic(WeightsFormatError):
    """Weights file does not start with the expected magic."""


class VersionUnsupported(WeightsFormatError):
    """Weights file version is not supported."""


class ShapeMismatchWithConfig(WeightsFormatError):
    """Stored tensors do not match the declared network config."""


# --- inference / vectorization --------------------------------------------------

class WeightsChannelMismatch(BathysegError):
    """Model input channels disagree with the requested input stack."""


class PlacementOutOfBounds(BathysegError):
    """A tile placement falls outside the merge target extent."""


class MissingGeoreference(BathysegError):
    """Vector export needs origin/pixel-size information."""


class EmptyList(BathysegError):
    """Aggregate of an empty collection."""
