"""Exception types shared across the package."""


class ScanLoopError(Exception):
    """Base class for all package-specific errors."""


class DivergentLoop(ScanLoopError):
    """The re-scan recursion has no finite fixed point (precision <= alpha * recall)."""


class UndefinedRatio(ScanLoopError):
    """Cost ratio requested at alpha = 0, where the baseline cost is zero."""


class InfeasibleOperatingPoint(ScanLoopError):
    """No false-positive rate in [0, 1] realizes the requested (precision, recall)."""


class QuadratureFailure(ScanLoopError):
    """Adaptive quadrature could not reach the requested tolerance."""


class SupportViolation(ScanLoopError):
    """The failure-rate distribution reaches the cost model's pole at alpha = p / r."""


class ModeMismatch(ScanLoopError):
    """A report produced in one simulation mode was passed to the other mode's analysis."""


class ConfigError(ScanLoopError):
    """Invalid experiment configuration; the message names the offending key."""
