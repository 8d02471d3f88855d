"""Semantic exception hierarchy.

Every error raised by this package derives from :class:`KbError` so callers
(notably the CLI) can map failures onto the exit-code contract:
configuration / input problems, numerical failures, and statistical failures
are distinguishable by type.
"""


class KbError(Exception):
    """Base class for all package errors."""


class InputError(KbError, ValueError):
    """Invalid argument, domain violation, or malformed configuration."""


class ModelAssumptionError(InputError):
    """A model violates the regularity conditions it declared."""


class DegenerateModelError(InputError):
    """A quantity the estimator divides by is numerically zero."""


class IntegrationError(KbError, ArithmeticError):
    """An ODE/SDE integration produced a non-finite or inadmissible state."""


class SingularInformationError(KbError, ArithmeticError):
    """Fisher information below the positivity floor."""


class StatisticalFailure(KbError):
    """A requested Monte Carlo assertion did not hold."""
