"""Exception hierarchy shared across the package.

Most errors subclass ValueError so callers that only know the standard
library can still catch them; the CLI maps each class to its exit code.
"""


class FaceactError(Exception):
    """Base class for all package errors."""


class ValidationError(FaceactError, ValueError):
    """Input data violates a documented invariant (bad value, bad range)."""


class StructuralError(FaceactError, ValueError):
    """Input has the wrong shape: dimension mismatch, misaligned lengths."""


class ParseError(ValidationError):
    """Text could not be decoded into the expected structure."""


class ConfigError(FaceactError):
    """Configuration is incomplete or inconsistent (unassigned subject, bad path)."""


class ServiceError(FaceactError):
    """A remote call failed after the retry budget was exhausted."""


class TrainingError(FaceactError):
    """Optimization produced a non-finite loss or otherwise diverged."""
