"""Exception hierarchy.

Numeric failures (``NumericFailure`` subclasses) map to CLI exit code 3,
configuration problems to exit code 2.
"""


class QotError(Exception):
    """Base class for every error raised by the package."""


class ConfigError(QotError, ValueError):
    """Bad experiment configuration; ``field`` and ``line`` locate it."""

    def __init__(self, message, field=None, line=None):
        self.field = field
        self.line = line
        where = []
        if line is not None:
            where.append(f"line {line}")
        if field is not None:
            where.append(f"field '{field}'")
        prefix = f"[{', '.join(where)}] " if where else ""
        super().__init__(prefix + message)


class NonPositiveDensity(QotError, ValueError):
    pass


class EmptyGrid(QotError, ValueError):
    pass


class NonFiniteValue(QotError, ValueError):
    pass


class DimensionMismatch(QotError, ValueError):
    pass


class UnsupportedDimension(QotError, ValueError):
    pass


class OutOfDomain(QotError, ValueError):
    pass


class TooLarge(QotError, ValueError):
    pass


class NotPositiveDefinite(QotError, ValueError):
    pass


class EmptyRegion(QotError, ValueError):
    pass


class TargetOutOfRange(QotError, ValueError):
    pass


class NotACoupling(QotError, ValueError):
    pass


class NumericFailure(QotError, RuntimeError):
    """A computation ran but could not deliver a trustworthy answer."""


class NoConvergence(NumericFailure):
    """Iteration budget exhausted; ``result`` holds the best iterate."""

    def __init__(self, message, result=None):
        super().__init__(message)
        self.result = result


class BandwidthUnderResolved(NumericFailure):
    pass


class EpsTooLargeForDelta(NumericFailure):
    pass


class MapNotInjective(NumericFailure):
    pass
