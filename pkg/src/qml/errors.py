"""Exception hierarchy shared by every module.

The CLI maps each class onto an exit code, so library code raises the most
specific class available instead of bare ``ValueError``.
"""


class QMLError(Exception):
    """Base class for all package errors."""

    exit_code = 1


class DomainError(QMLError, ValueError):
    """An argument lies outside the domain of the operation."""


class ConfigurationError(DomainError):
    """A parameter combination cannot produce a valid configuration."""


class CapacityError(QMLError):
    """A request exceeds a configured memory or size budget."""


class MissingValuesError(QMLError, LookupError):
    """Cached central values do not cover a requested range of primes."""

    def __init__(self, gaps):
        self.gaps = list(gaps)
        shown = ", ".join(f"[{lo}, {hi}]" for lo, hi in self.gaps[:5])
        more = "" if len(self.gaps) <= 5 else f" (+{len(self.gaps) - 5} more)"
        super().__init__(f"values missing for range {shown}{more}")


class AccuracyError(QMLError, ArithmeticError):
    """A numerical procedure failed to reach its accuracy target."""

    exit_code = 3


class CacheError(QMLError, OSError):
    """A cache or output file could not be read, written or validated."""

    exit_code = 2


class CacheMismatchError(DomainError):
    """A cache was produced at a coarser tolerance than the one requested."""
