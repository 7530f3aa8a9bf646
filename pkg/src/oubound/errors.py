"""Exception types shared across the package."""


class OuboundError(Exception):
    pass


class ExactEngineSizeError(OuboundError):
    """Raised when an exact (dense) computation would exceed the configured size cap."""


class OracleSizeError(OuboundError):
    """Raised when the brute-force pairing oracle is asked for too large an input."""


class DegenerateDenominatorError(OuboundError, ArithmeticError):
    """An estimator's denominator is zero (or non-positive) on this path."""


class DegenerateDesignError(OuboundError, ValueError):
    pass


class UndefinedRateError(OuboundError, ValueError):
    pass


class PlanError(OuboundError, ValueError):
    pass
