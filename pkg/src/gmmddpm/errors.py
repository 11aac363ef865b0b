"""Exception hierarchy shared by every module of the package."""


class GmmDdpmError(Exception):
    """Base class for all errors raised by gmmddpm."""


class ValidationError(GmmDdpmError, ValueError):
    """An input violated a documented invariant."""


class Empty(ValidationError):
    pass


class NonPositiveWeight(ValidationError):
    pass


class WeightsNotNormalized(ValidationError):
    pass


class DimensionMismatch(ValidationError):
    pass


class OutOfRangeAlphaBar(ValidationError):
    pass


class ZeroCount(ValidationError):
    pass


class BadConstants(ValidationError):
    pass


class TooFewSteps(ValidationError):
    pass


class StepOutOfRange(ValidationError):
    pass


class OracleDimensionMismatch(DimensionMismatch):
    pass


class BadDelta(ValidationError):
    pass


class NegativeAmplitude(ValidationError):
    pass


class TooFewSamples(ValidationError):
    pass


class WrongDimension(DimensionMismatch):
    pass


class DegenerateRange(ValidationError):
    pass


class TooFewPoints(ValidationError):
    pass


class NonPositiveEstimate(ValidationError):
    pass


class EmptyReport(GmmDdpmError):
    pass


class ParseError(GmmDdpmError, ValueError):
    """Malformed configuration text; carries the offending line or field."""

    def __init__(self, message, line=None, field=None):
        where = []
        if line is not None:
            where.append(f"line {line}")
        if field is not None:
            where.append(f"field {field!r}")
        prefix = f"[{', '.join(where)}] " if where else ""
        super().__init__(prefix + message)
        self.line = line
        self.field = field
