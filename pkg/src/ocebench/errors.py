"""Exception types shared across the package."""


class OcebenchError(Exception):
    """Base class for all domain errors raised by this package."""


class BadMagic(OcebenchError):
    """File does not start with the tensor container magic bytes."""


class TruncatedFile(OcebenchError):
    """File ended before the declared header or payload was complete."""


class ShapeMismatch(OcebenchError):
    """Payload length or array shape disagrees with the declared extents."""


class ConfigInvalid(OcebenchError):
    """A configuration object violates its invariants."""


class NonPositiveConcentration(OcebenchError):
    """Gelatin concentration must be strictly positive."""


class TooFewFrames(OcebenchError):
    """Operation needs more frames along the time axis than supplied."""


class IndexOutOfRange(OcebenchError):
    """An index (e.g. surface position) lies outside the tensor extents."""


class AllRowsMasked(OcebenchError):
    """No depth rows left to reduce over."""


class NoWavefront(OcebenchError):
    """Fewer than two lateral pixels produced a qualifying arrival peak."""


class DegenerateTrack(OcebenchError):
    """Arrival times do not define a finite positive velocity."""


class TooFewPoints(OcebenchError):
    """A fit needs at least two valid points."""


class DegenerateDesign(OcebenchError):
    """Regression design matrix is rank deficient (e.g. constant feature)."""


class NoConvergence(OcebenchError):
    """Iterative solver hit its iteration cap before reaching tolerance."""


class InvalidSpec(OcebenchError):
    """A model specification is malformed."""


class NonFiniteLoss(OcebenchError):
    """Training loss became NaN or infinite."""


class BadCounts(OcebenchError):
    """Dataset does not have the sample counts the protocol requires."""


class UndefinedCorrelation(OcebenchError):
    """Correlation of a constant series is undefined."""


class UsageError(OcebenchError):
    """Command line was malformed."""


class ConfigError(OcebenchError):
    """A config file could not be parsed or contained unknown keys."""
