"""Exception taxonomy shared across the package.

Domain errors (bad arguments, infeasible problems) are ValueError subclasses;
numeric failures (non-convergent quadrature, failed calibration) are
RuntimeError subclasses so callers can distinguish "you asked a malformed
question" from "the computation could not certify an answer".
"""


class DomainError(ValueError):
    """Argument outside the mathematical domain of an operation."""


class ArbitrageError(ValueError):
    """The scenario tree admits arbitrage (empty martingale polytope)."""


class InfeasibleError(ValueError):
    """Initial wealth below the negative lower hedging price of the endowment."""


class UnboundedError(ValueError):
    """The primal value is +infinity (free utility-bearing consumption)."""


class NumericError(RuntimeError):
    """A numerical procedure failed to converge to its stated tolerance."""


class QuadratureError(NumericError):
    """Adaptive quadrature did not reach the requested relative tolerance."""


class CalibrationError(NumericError):
    """Clock-normalization calibration failed (bracket or truncation)."""
