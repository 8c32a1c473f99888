"""Exception hierarchy shared by all gradvol modules."""


class GradvolError(Exception):
    """Base class for every error raised by this package."""


class ConfigError(GradvolError):
    """Malformed or invalid experiment configuration."""


class SeriesError(GradvolError, ValueError):
    """Invalid monomial series construction or query."""


class TrivialPieceError(SeriesError):
    """The graded piece at the requested level is empty."""


class EnumerationCapError(SeriesError):
    """Lattice-point enumeration would exceed the configured cap."""


class ConvergenceError(GradvolError):
    """A numerical routine failed to bracket or converge."""


class MassError(GradvolError):
    """Grid Monge-Ampere integration was rejected (box or smoothing)."""


class HypothesisNotMet(GradvolError):
    """Precondition of a property harness does not hold; the case is skipped."""


class InvariantViolation(GradvolError, AssertionError):
    """An identity that must hold by construction was observed to fail."""
