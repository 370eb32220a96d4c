"""Exception types shared across the engine.

Every error raised on purpose by this package derives from CoachError so
callers can catch one base class at service boundaries.
"""


class CoachError(Exception):
    """Base class for all errors raised by this package."""


class ClipFormatError(CoachError):
    """A clip file could not be parsed. Message includes the line number."""


class SchemaVersionError(ClipFormatError):
    """Clip file declares a schema version this build does not understand."""


class ClipValidationError(CoachError):
    """A motion clip failed validation checks required by the pipeline."""


class InsufficientDataError(CoachError):
    """Not enough samples to fit a statistic (e.g. tuning needs >= 2 clips)."""


class GeometryError(CoachError):
    """Degenerate skeleton geometry (zero torso length, zero-length arm)."""


class ThresholdError(CoachError):
    """A rule threshold is unusable (e.g. ratio score with tau <= 0)."""


class WeightsError(CoachError):
    """Fusion weights are degenerate (both contributions zero)."""


class ConfigError(CoachError):
    """A configuration value is outside its allowed set."""


class ProfileError(CoachError):
    """A stored user profile is missing fields or unreadable."""


class ProtocolError(CoachError):
    """A wire message violates the session protocol."""
