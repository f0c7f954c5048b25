"""
Exception hierarchy for the moire sensor simulator.

Every error carries the process exit code the CLI maps it to:
- 2: configuration / schema / invalid input values
- 3: file and artifact I/O
- 4: numeric and physical-domain failures
"""


class MoireSimError(Exception):
    """Base class for all simulator errors."""

    exit_code: int = 1


# Configuration ---------------------------------------------------------------

class ConfigError(MoireSimError):
    """Invalid run configuration or domain value."""

    exit_code = 2


class InvalidGeometry(ConfigError):
    """Grating or sensor geometry violates its invariants."""


class NonParallelGratings(ConfigError):
    """An operation that assumes parallel gratings got rotated ones."""


# Artifacts -------------------------------------------------------------------

class ArtifactError(MoireSimError):
    """Unreadable, malformed or protected output artifact."""

    exit_code = 3


# Numeric ---------------------------------------------------------------------

class NumericError(MoireSimError):
    """Numerical or physical-domain failure."""

    exit_code = 4


class DegenerateGratings(NumericError):
    """The two wave vectors coincide, so the moire period is infinite."""


class BoundaryCase(NumericError):
    """Intrinsic mismatch equals a/Z; the compression trend is undefined."""


class UndersampledGrating(NumericError):
    """A grating pitch is below the sampling bound of the raster."""


class NoPeak(NumericError):
    """No dominant fringe peak in the spectrum."""


class ZeroImage(NumericError):
    """Image has zero total intensity."""


class SingularSystem(NumericError):
    """Regularized normal matrix is numerically singular."""


class InsufficientData(NumericError):
    """Too few samples for the requested fit."""


class DimensionMismatch(NumericError):
    """Two images or arrays that must share a shape do not."""


class LoadError(NumericError):
    """Wrench cannot be realised by the load model."""


class OutOfRange(LoadError):
    """Wrench component outside the configured range."""


class TiltWithoutPreload(LoadError):
    """Tilt moments requested with a normal force below the preload floor."""
