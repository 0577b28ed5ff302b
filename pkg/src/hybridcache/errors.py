"""Exception types shared across the analytic and simulation engines."""


class HybridCacheError(Exception):
    """Base class for all package errors."""


class InvalidArgument(HybridCacheError, ValueError):
    """An argument violates a documented precondition."""


class ConfigError(HybridCacheError):
    """A configuration document could not be parsed or resolved.

    ``line`` and ``field`` point at the offending entry when known.
    """

    def __init__(self, message, line=None, field=None):
        self.line = line
        self.field = field
        where = []
        if line is not None:
            where.append(f"line {line}")
        if field is not None:
            where.append(f"field '{field}'")
        prefix = f"{', '.join(where)}: " if where else ""
        super().__init__(prefix + message)


class NumericFailure(HybridCacheError, ArithmeticError):
    """Quadrature or root finding did not converge.

    ``estimate`` carries the partial result, ``error`` its error estimate.
    """

    def __init__(self, message, estimate=None, error=None, context=None):
        self.estimate = estimate
        self.error = error
        self.context = dict(context or {})
        super().__init__(message)


class BracketFailure(NumericFailure):
    """Root finder was handed an interval without a sign change."""


class DegenerateEvent(HybridCacheError):
    """An association event has (numerically) zero probability."""
