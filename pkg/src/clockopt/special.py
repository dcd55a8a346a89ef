"""Special functions behind the occupation-clock closed forms.

Everything here is a deterministic pure function of its arguments: the Gamma
function, the Hermite function of negative order

    H_xi(x) = 1/(2 Gamma(-xi)) * int_0^inf exp(-s - 2 x sqrt(s)) s^(-xi/2 - 1) ds,

its derivative identity d/dx H_xi = 2 xi H_{xi-1}, the Laplace exponent
psi(lambda) of the inverse clock, the hitting-time transform j(lambda, r),
and the feedback ratio h(z) = -(2 beta/alpha) H_{-beta/alpha-1}(z) / H_{-beta/alpha}(z).

The defining integral has an integrable endpoint singularity at s = 0.  It is
split at s = 1: the substitution s = u^(2/p) (p = -xi) removes the singularity
on (0, 1), and the tail is handled by adaptive quadrature on (1, inf) where the
exp(-s) decay dominates.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

from scipy import integrate

from .errors import DomainError, QuadratureError

__all__ = [
    "QuadratureSpec",
    "DEFAULT_QUADRATURE",
    "gamma",
    "hermite_h",
    "hermite_dh",
    "psi_laplace",
    "j_hitting",
    "h_feedback",
]


@dataclass(frozen=True)
class QuadratureSpec:
    """Accuracy controls for the Hermite-function integral."""

    rel_tol: float = 1e-12
    max_subdivisions: int = 200

    def __post_init__(self) -> None:
        if not (0.0 < self.rel_tol <= 1e-6):
            raise DomainError(f"rel_tol must lie in (0, 1e-6], got {self.rel_tol}")
        if self.max_subdivisions < 64:
            raise DomainError(
                f"max_subdivisions must be >= 64, got {self.max_subdivisions}"
            )


DEFAULT_QUADRATURE = QuadratureSpec()

# Lanczos approximation, g = 7, 9 coefficients.  Relative error < 1e-13 on the
# real positive axis, which the anchor tests pin down.
_LANCZOS_G = 7.0
_LANCZOS_COEF = (
    0.99999999999980993,
    676.5203681218851,
    -1259.1392167224028,
    771.32342877765313,
    -176.61502916214059,
    12.507343278686905,
    -0.13857109526572012,
    9.9843695780195716e-6,
    1.5056327351493116e-7,
)


def gamma(x: float) -> float:
    """Gamma function for x > 0 via Lanczos with reflection below 1/2."""
    if not (x > 0.0) or math.isnan(x):
        raise DomainError(f"gamma requires a positive argument, got {x}")
    return _gamma_real(x)


def _gamma_real(x: float) -> float:
    if x < 0.5:
        # Reflection keeps the Lanczos sum on its accurate branch.
        return math.pi / (math.sin(math.pi * x) * _gamma_real(1.0 - x))
    z = x - 1.0
    acc = _LANCZOS_COEF[0]
    for i in range(1, len(_LANCZOS_COEF)):
        acc += _LANCZOS_COEF[i] / (z + i)
    t = z + _LANCZOS_G + 0.5
    return math.sqrt(2.0 * math.pi) * t ** (z + 0.5) * math.exp(-t) * acc


def hermite_h(xi: float, x: float, spec: QuadratureSpec = DEFAULT_QUADRATURE) -> float:
    """Hermite function H_xi(x) for xi < 0, x >= 0.

    Strictly positive and strictly decreasing in x.  At x = 0 it reduces to
    Gamma(-xi/2) / (2 Gamma(-xi)).
    """
    if not (xi < 0.0):
        raise DomainError(f"hermite_h requires xi < 0, got xi={xi}")
    if not (x >= 0.0):
        raise DomainError(f"hermite_h requires x >= 0, got x={x}")
    return _hermite_cached(float(xi), float(x), spec.rel_tol, spec.max_subdivisions)


@lru_cache(maxsize=65536)
def _hermite_cached(xi: float, x: float, rel_tol: float, limit: int) -> float:
    p = -xi

    def near(u: float) -> float:
        # s = u^(2/p) maps (0,1) onto itself and flattens s^(p/2-1) ds to du.
        return math.exp(-(u ** (2.0 / p)) - 2.0 * x * u ** (1.0 / p))

    def tail(s: float) -> float:
        return math.exp(-s - 2.0 * x * math.sqrt(s)) * s ** (0.5 * p - 1.0)

    i1, e1 = integrate.quad(near, 0.0, 1.0, epsabs=0.0, epsrel=rel_tol, limit=limit)
    i1 *= 2.0 / p
    e1 *= 2.0 / p
    i2, e2 = integrate.quad(
        tail, 1.0, math.inf, epsabs=1e-300, epsrel=rel_tol, limit=limit
    )
    total = i1 + i2
    if not math.isfinite(total) or total <= 0.0:
        raise QuadratureError(
            f"hermite_h integral failed: xi={xi}, x={x}, pieces=({i1}, {i2})"
        )
    if e1 + e2 > 50.0 * rel_tol * total + 1e-300:
        raise QuadratureError(
            "hermite_h quadrature did not converge: "
            f"xi={xi}, x={x}, abserr={e1 + e2:.3e}, value={total:.6e}, "
            f"rel_tol={rel_tol}, limit={limit}"
        )
    return total / (2.0 * _gamma_real(p))


def hermite_dh(xi: float, x: float, spec: QuadratureSpec = DEFAULT_QUADRATURE) -> float:
    """d/dx H_xi(x) = 2 xi H_{xi-1}(x); strictly negative for xi < 0."""
    if not (xi < 0.0):
        raise DomainError(f"hermite_dh requires xi < 0, got xi={xi}")
    return 2.0 * xi * hermite_h(xi - 1.0, x, spec)


def psi_laplace(lam: float, alpha: float) -> float:
    """Laplace exponent of the inverse clock for mean-reversion rate alpha.

    psi(lambda) = alpha * 2^(1 + lambda/alpha) * Gamma(1/2 + lambda/(2 alpha))^2
                  / (sqrt(2 pi) * Gamma(lambda/alpha)),  lambda > 0.

    The branch lambda in (-alpha, 0] is intentionally not implemented; the
    transform is infinite for lambda <= -alpha.
    """
    if not (alpha > 0.0):
        raise DomainError(f"psi_laplace requires alpha > 0, got {alpha}")
    if not (lam > 0.0):
        raise DomainError(
            f"psi_laplace implements only lambda > 0, got {lam} "
            "(the transform is infinite for lambda <= -alpha)"
        )
    a = lam / alpha
    return (
        alpha
        * 2.0 ** (1.0 + a)
        * gamma(0.5 + 0.5 * a) ** 2
        / (math.sqrt(2.0 * math.pi) * gamma(a))
    )


def j_hitting(
    lam: float,
    r: float,
    alpha: float,
    spec: QuadratureSpec = DEFAULT_QUADRATURE,
) -> float:
    """Laplace transform of the first zero-hitting time started at distance r.

    j(lambda, r) = 2^(lambda/alpha) * Gamma((1 + lambda/alpha)/2) / Gamma(1/2)
                   * H_{-lambda/alpha}(r * sqrt(alpha)).

    Equals 1 at r = 0 and decreases to 0 as r grows.  The sqrt(alpha) argument
    scaling is the one that solves the hitting ODE
    (1/2) u'' - alpha r u' = lambda u with u(0) = 1, u(inf) = 0; it is pinned
    by an independent boundary-value oracle and by the Monte Carlo law in the
    test suite.
    """
    if not (lam > 0.0):
        raise DomainError(f"j_hitting requires lambda > 0, got {lam}")
    if not (r >= 0.0):
        raise DomainError(f"j_hitting requires r >= 0, got {r}")
    if not (alpha > 0.0):
        raise DomainError(f"j_hitting requires alpha > 0, got {alpha}")
    a = lam / alpha
    return (
        2.0**a
        * gamma(0.5 * (1.0 + a))
        / gamma(0.5)
        * hermite_h(-a, r * math.sqrt(alpha), spec)
    )


def h_feedback(
    z: float,
    beta: float,
    alpha: float,
    spec: QuadratureSpec = DEFAULT_QUADRATURE,
) -> float:
    """Feedback ratio h(z) = -(2 beta/alpha) H_{-beta/alpha-1}(z) / H_{-beta/alpha}(z).

    Strictly negative, bounded on [0, inf), with z * h(z) -> -D as z -> inf.
    """
    if not (z >= 0.0):
        raise DomainError(f"h_feedback requires z >= 0, got {z}")
    if not (beta > 0.0 and alpha > 0.0):
        raise DomainError(f"h_feedback requires beta, alpha > 0, got {beta}, {alpha}")
    b = beta / alpha
    return -2.0 * b * hermite_h(-b - 1.0, z, spec) / hermite_h(-b, z, spec)
