"""Discounted HARA utility fields with marginal, inverse marginal and conjugate.

A field is U(t, x) = exp(-beta t) * U_gamma(x) with U_gamma the HARA family
((x^gamma - 1)/gamma for gamma < 1, gamma != 0; log x for gamma = 0).  These
are the only fields the quantitative results exercise; nothing here depends
on the sample-path argument.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DomainError

__all__ = [
    "UtilityField",
    "u_eval",
    "marginal_utility",
    "inverse_marginal",
    "conjugate_v",
    "asymptotic_elasticity",
    "hara_shift_constants",
]


@dataclass(frozen=True)
class UtilityField:
    """Discounted HARA utility random field.

    kind: "log" or "power"; gamma is the power exponent (< 1, nonzero) and is
    ignored for log; beta >= 0 is the impatience rate.
    """

    kind: str
    beta: float = 0.0
    gamma: float | None = None

    def __post_init__(self) -> None:
        if self.kind not in ("log", "power"):
            raise DomainError(f"unknown utility kind {self.kind!r}")
        if not (self.beta >= 0.0):
            raise DomainError(f"beta must be nonnegative, got {self.beta}")
        if self.kind == "power":
            if self.gamma is None:
                raise DomainError("power utility requires gamma")
            if not (self.gamma < 1.0) or self.gamma == 0.0:
                raise DomainError(
                    f"power utility requires gamma < 1, gamma != 0, got {self.gamma}"
                )


def _discount(f: UtilityField, t):
    return np.exp(-f.beta * np.asarray(t, dtype=float))


def u_eval(f: UtilityField, t, x):
    """U(t, x); x must be strictly positive."""
    x = np.asarray(x, dtype=float)
    if np.any(x <= 0.0):
        raise DomainError("utility is defined for x > 0 only")
    if f.kind == "log":
        base = np.log(x)
    else:
        g = f.gamma
        base = (x**g - 1.0) / g
    out = _discount(f, t) * base
    return float(out) if out.ndim == 0 else out


def marginal_utility(f: UtilityField, t, x):
    """U_x(t, x) = exp(-beta t) x^(gamma - 1) (gamma = 0 for log)."""
    x = np.asarray(x, dtype=float)
    if np.any(x <= 0.0):
        raise DomainError("marginal utility is defined for x > 0 only")
    g = 0.0 if f.kind == "log" else f.gamma
    out = _discount(f, t) * x ** (g - 1.0)
    return float(out) if out.ndim == 0 else out


def inverse_marginal(f: UtilityField, t, y):
    """I(t, y): the unique x with U_x(t, x) = y.

    log:   I(t, y) = exp(-beta t) / y
    power: I(t, y) = (exp(beta t) y)^(1/(gamma - 1))
    """
    y = np.asarray(y, dtype=float)
    if np.any(y <= 0.0):
        raise DomainError("inverse marginal utility is defined for y > 0 only")
    if f.kind == "log":
        out = _discount(f, t) / y
    else:
        out = (np.exp(f.beta * np.asarray(t, dtype=float)) * y) ** (
            1.0 / (f.gamma - 1.0)
        )
    return float(out) if out.ndim == 0 else out


def conjugate_v(f: UtilityField, t, y):
    """Convex conjugate V(t, y) = sup_{x>0} [U(t, x) - x y].

    log:   exp(-beta t) * (-beta t - log y - 1)
    power: exp(-beta t) * ((1-gamma)/gamma) * (exp(beta t) y)^(gamma/(gamma-1))
           - exp(-beta t)/gamma
    """
    y = np.asarray(y, dtype=float)
    if np.any(y <= 0.0):
        raise DomainError("conjugate is defined for y > 0 only")
    t_arr = np.asarray(t, dtype=float)
    disc = np.exp(-f.beta * t_arr)
    if f.kind == "log":
        out = disc * (-f.beta * t_arr - np.log(y) - 1.0)
    else:
        g = f.gamma
        out = disc * ((1.0 - g) / g) * (np.exp(f.beta * t_arr) * y) ** (
            g / (g - 1.0)
        ) - disc / g
    return float(out) if out.ndim == 0 else out


def conjugate_v_slope(f: UtilityField, t, y):
    """dV/dy = -I(t, y); used by the dual solver's optimality checks."""
    return -np.asarray(inverse_marginal(f, t, y))


def asymptotic_elasticity(f: UtilityField, x_grid) -> float:
    """Tail supremum of x U_x / U over the grid; a certified bound on AE.

    The tail is the part of the grid above sqrt(max); the true limsup is 0 for
    log and gamma^+ for power, both < 1.  Requires the grid to reach 1e6.
    """
    x = np.sort(np.asarray(x_grid, dtype=float))
    if x.size < 2 or x[-1] < 1e6:
        raise DomainError("elasticity grid must be increasing with max >= 1e6")
    if np.any(x <= 0.0):
        raise DomainError("elasticity grid must be positive")
    tail = x[x >= math.sqrt(x[-1])]
    # Discount cancels in the ratio, so evaluate at t = 0.
    ratio = tail * np.asarray(marginal_utility(f, 0.0, tail)) / np.asarray(
        u_eval(f, 0.0, tail)
    )
    return float(np.max(ratio))


def hara_shift_constants(f: UtilityField, delta: float) -> tuple[float, float]:
    """Constants (A, B) with U(t, delta x) >= A(delta) + B(delta) U(t, x).

    For log: A = log(delta), B = 1.  For power gamma: A = U_gamma(delta),
    B = delta^gamma.  Valid for delta in (0, 1] and beta >= 0 because the
    discount factor only shrinks the (negative) constant term.
    """
    if not (0.0 < delta <= 1.0):
        raise DomainError(f"delta must lie in (0, 1], got {delta}")
    if f.kind == "log":
        return math.log(delta), 1.0
    g = f.gamma
    return (delta**g - 1.0) / g, delta**g
