"""Exception types raised across the package.

Every error derives from :class:`HamscopeError`; most also derive from
``ValueError`` because they signal bad input rather than a bug.
"""

from __future__ import annotations


class HamscopeError(Exception):
    """Base class for all package errors."""


# ingest
class MalformedRow(HamscopeError, ValueError):
    def __init__(self, message: str, line: int | None = None) -> None:
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class NonUniformSampling(HamscopeError, ValueError):
    pass


class EmptyInput(HamscopeError, ValueError):
    pass


class EventOutOfRange(HamscopeError, ValueError):
    pass


class WindowTooShort(HamscopeError, ValueError):
    pass


# embed
class RankDeficient(UserWarning):
    """Fewer nonzero singular values than requested components."""


class DimensionMismatch(HamscopeError, ValueError):
    pass


class PerplexityTooLarge(HamscopeError, ValueError):
    pass


class DegenerateDistances(HamscopeError, ValueError):
    pass


# dynamics
class TrajectoryTooShort(HamscopeError, ValueError):
    pass


class BadWindow(HamscopeError, ValueError):
    pass


# hamfit
class SingularSystem(HamscopeError, ArithmeticError):
    pass


class DivergedLoss(HamscopeError, ArithmeticError):
    pass


# bayes
class NonFiniteEnergy(HamscopeError, ArithmeticError):
    pass


# structcmp
class FrameMismatch(HamscopeError, ValueError):
    pass


class DegenerateReference(HamscopeError, ValueError):
    pass


# synth
class Blowup(HamscopeError, ArithmeticError):
    pass


class ConfigError(HamscopeError, ValueError):
    """Invalid configuration; ``key`` is the dotted path of the offending entry."""

    def __init__(self, key: str, message: str) -> None:
        self.key = key
        super().__init__(f"{key}: {message}")
