"""Exception types raised across the package."""


class FegradError(Exception):
    """Base class for all package errors."""


# mesh / element
class ParseError(FegradError):
    pass


class UnsupportedElement(FegradError):
    pass


class DimensionMismatch(FegradError, ValueError):
    pass


class UnmatchedNode(FegradError):
    pass


class PointOutsideMesh(FegradError):
    pass


class DegenerateElement(FegradError):
    pass


# autodiff / operator
class NonFiniteValue(FegradError, FloatingPointError):
    pass


class SizeLimitExceeded(FegradError):
    pass


class ShapeMismatch(FegradError, ValueError):
    pass


# sparse / solver
class PatternTooSmall(FegradError):
    pass


class BreakdownError(FegradError):
    pass


class StagnationError(FegradError):
    pass


class SingularMatrix(FegradError):
    pass


class IndexOutOfRange(FegradError, IndexError):
    pass


class MaxIterationsExceeded(FegradError):
    def __init__(self, msg, report=None):
        super().__init__(msg)
        self.report = report


# physics
class InvertedElement(FegradError):
    pass


class DomainError(FegradError, ValueError):
    pass


# cli
class UnknownExample(FegradError, KeyError):
    pass
