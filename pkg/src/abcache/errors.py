"""Exception hierarchy.

Two broad families matter to callers: configuration mistakes (bad orders,
malformed mixtures, invalid grids) and numerical failures at run time
(domain violations, spacing-premise violations, singular denominators).
The service and CLI map the former to exit code 2 and the latter to 3.
"""


class AbCacheError(Exception):
    """Base class for all library errors."""


class ConfigError(AbCacheError, ValueError):
    """Invalid configuration or unsupported parameter combination."""


class DomainError(AbCacheError, ValueError):
    """Argument outside its mathematical domain (time, log-SNR, shape)."""


class SpacingError(AbCacheError, ValueError):
    """A uniform-spacing premise is violated beyond tolerance."""


class NumericalError(AbCacheError, ArithmeticError):
    """Computation failed numerically (singular or non-finite result)."""
