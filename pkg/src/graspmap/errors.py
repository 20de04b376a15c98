"""Exception hierarchy shared by all graspmap modules."""


class GraspMapError(Exception):
    """Base class for every error raised by this package."""


class OutOfBounds(GraspMapError, ValueError):
    pass


class DegenerateMap(GraspMapError, ValueError):
    """A belief map (or its fit) has no two distinct modes to decode."""


class NotARectangle(GraspMapError, ValueError):
    pass


class InvalidCoordinates(GraspMapError, ValueError):
    pass


class EmptyGroundTruth(GraspMapError, ValueError):
    pass


class LengthMismatch(GraspMapError, ValueError):
    pass


class ZeroNormMap(GraspMapError, ValueError):
    pass


class DimensionMismatch(GraspMapError, ValueError):
    pass


class EmptyMap(GraspMapError, ValueError):
    pass


class SingularCovariance(GraspMapError, ArithmeticError):
    pass


class AllDiscarded(GraspMapError):
    """Every hypothesis for an input was rejected by the ranker."""

    def __init__(self, message, discarded=None):
        super().__init__(message)
        self.discarded = dict(discarded or {})


class MalformedLine(GraspMapError, ValueError):
    def __init__(self, lineno, line):
        super().__init__(f"line {lineno}: expected two floats, got {line!r}")
        self.lineno = lineno
        self.line = line


class TruncatedGroup(GraspMapError, ValueError):
    pass


class ImageTooSmall(GraspMapError, ValueError):
    pass


class MissingShapeLabels(GraspMapError, ValueError):
    pass


class ShapeMismatch(GraspMapError, ValueError):
    pass


class NonFiniteGradient(GraspMapError, FloatingPointError):
    pass


class EmptyFold(GraspMapError, ValueError):
    pass


class IoFailure(GraspMapError, OSError):
    pass


class ConfigError(GraspMapError, ValueError):
    pass
