"""Exceptions and warnings raised by splitstream."""

from __future__ import annotations


class SplitstreamError(Exception):
    """Base class for every error raised by the package."""


class InvalidLaw(SplitstreamError, ValueError):
    """A branching law or splitting measure violates its invariants."""


class DegenerateSplit(InvalidLaw):
    """A weight equal to 0 or 1 makes the splitting degenerate."""


class NotApplicable(SplitstreamError, ValueError):
    """A closed form was requested outside the parameters it covers."""


class PoleError(SplitstreamError, ArithmeticError):
    """A closed form was evaluated at or beyond its pole."""


class NotArithmetic(SplitstreamError, ValueError):
    """The measure has no lattice span, so no periodic fluctuation exists."""


class NoSignChange(SplitstreamError, ValueError):
    """The determinant has the same sign at both ends of the bracket."""

    def __init__(self, lo: float, hi: float, det_lo: float, det_hi: float) -> None:
        self.lo = lo
        self.hi = hi
        self.det_lo = det_lo
        self.det_hi = det_hi
        super().__init__(
            f"det M has no sign change on [{lo:g}, {hi:g}] "
            f"(det={det_lo:.6g} and {det_hi:.6g}); widen the bracket or raise mc_paths"
        )


class SingularNearLambdaC(SplitstreamError, ArithmeticError):
    """The linear system is too close to singular to be solved reliably."""


class ConfigError(SplitstreamError, ValueError):
    """An experiment configuration or input file could not be used."""


class IllConditionedEstimate(UserWarning):
    """A Monte Carlo estimate carries a large relative standard error."""


class UntrustedEstimate(UserWarning):
    """A series or simulation result failed its own reliability check."""
