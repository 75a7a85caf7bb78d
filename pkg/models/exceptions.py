class KrRipError(Exception):
    """Base class for all errors raised by the library"""


class DimensionError(KrRipError, ValueError):
    """A dimension is zero, negative or does not match the operator"""


class DistributionError(KrRipError, ValueError):
    """An operation is not defined for the requested distribution family"""


class BudgetExceededError(KrRipError, RuntimeError):
    """A memory or enumeration budget would be exceeded"""


class ConfigError(KrRipError, ValueError):
    """An experiment configuration is malformed or inconsistent"""


class InfeasibleError(KrRipError, RuntimeError):
    """A requested computation had to be downgraded and strict mode is on"""
