"""Exception types shared across modules."""


class SpectraError(Exception):
    exit_code = 3


class ValidationError(SpectraError, ValueError):
    exit_code = 2


class FlipNotAllowed(ValidationError):
    pass


class UnsupportedSurface(ValidationError):
    pass


class NotRegular(ValidationError):
    pass


class PoleOfMap(SpectraError, ZeroDivisionError):
    pass


class ConflictingFlags(ValidationError):
    pass


class ActiveBoundary(ValidationError):
    pass


class ApparentSingularity(SpectraError):
    pass


class NumericalFailure(SpectraError):
    pass
