"""Exception hierarchy shared by all modules."""


class NeedleError(Exception):
    """Base class for every error raised by this package."""


class DomainExceeded(NeedleError, ValueError):
    pass


class BadDimension(NeedleError, ValueError):
    pass


class NotANorm(NeedleError, ValueError):
    pass


class ToleranceNotMet(NeedleError, RuntimeError):
    pass


class NonSmoothDensity(NeedleError, ValueError):
    pass


class MassDiverged(NeedleError, ArithmeticError):
    pass


class QuantileFailure(NeedleError, ValueError):
    pass


class OverlappingIntervals(NeedleError, ValueError):
    pass


class FamilyEmpty(NeedleError, ValueError):
    pass


class NotMeanZero(NeedleError, ValueError):
    pass


class NumericalDualityGap(NeedleError, ArithmeticError):
    pass


class AmbiguousInterior(NeedleError, RuntimeError):
    """A point is interior to two distinct maximal tight chains."""

    def __init__(self, points):
        self.points = sorted(int(p) for p in points)
        super().__init__(f"points interior to several maximal rays: {self.points[:20]}")


class NotSaturated(NeedleError, ValueError):
    pass


class MassUnreachable(NeedleError, ValueError):
    pass


class InvalidSpace(NeedleError, ValueError):
    pass


class MissingField(NeedleError, KeyError):
    pass


class ParseError(NeedleError, ValueError):
    pass
