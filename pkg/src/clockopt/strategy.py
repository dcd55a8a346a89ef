"""Market simulation and closed-form optimal controls under the occupation clock.

The market has one stock dS = S(mu dt + sigma dB) and the nontradable index R
driving the clock, with d[B, W] = rho dt.  For log utility the optimal triple
is in feedback form:

    nu(R)    = sqrt(alpha) sgn(R) h(|R| sqrt(alpha))
    pi       = X (theta + rho nu) / (sigma S)
    c_hat    = X g(kappa)

where h is the bounded feedback ratio from `special`.  The nu used here is the
one the martingale-representation chain produces: it equals
sgn(r) d_r j(beta, |r|) / j(beta, |r|) exactly, with j the hitting transform
whose argument scaling is certified against an independent ODE oracle.  The
cross-check of the two evaluation routes is part of the test suite.

Two candidate consumption fractions g are shipped and adjudicated empirically:

    derived_psi_numerator: g(k) = psi(beta) / (1 - exp(-(1-k) psi(beta)))
    printed_521:           g(k) = (1 - exp(-psi(beta))) / (1 - exp(-(1-k) psi(beta)))

Both are positive multiples of wealth; only one reproduces the budget identity
E[int Z c_hat dkappa] = (1 - exp(-psi))/psi when Z is seeded by the
first-order condition Z_0 = 1/c_hat(0).

The dual process Z follows dZ = Z (nu dW - (theta + rho nu) dB) and is stepped
in log coordinates, which keeps it positive and makes each step an exact
one-step martingale given the frozen coefficients.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from enum import Enum
from functools import lru_cache

import numpy as np

from .clock import (
    McEstimate,
    OUConfig,
    _band_fraction,
    _chunk_bounds,
    _mc_stats as _stats,
    _ou_coeffs,
    _ou_steps,
    default_epsilon,
    path_rng,
)
from .errors import DomainError
from .special import h_feedback, j_hitting, psi_laplace
from .utility import UtilityField, u_eval

__all__ = [
    "MarketParams",
    "ConsumptionLaw",
    "StrategyPath",
    "EnsembleResult",
    "AdjudicationReport",
    "DominanceReport",
    "BoundReport",
    "check_no_arbitrage",
    "g_potential",
    "nu_feedback",
    "consumption_fraction",
    "optimal_controls",
    "simulate_optimal_run",
    "strategy_ensemble",
    "adjudicate_consumption_law",
    "estimate_expected_utility",
    "compare_strategies",
    "remark_bound_check",
    "discounted_clock_target",
]

_CHECKPOINTS = (0.5, 1.0, 2.0)


@dataclass(frozen=True)
class MarketParams:
    """Constant market coefficients; theta = mu/sigma is the price of risk."""

    mu: float
    sigma: float
    rho: float
    alpha: float
    beta: float

    def __post_init__(self) -> None:
        if not (self.sigma > 0.0):
            raise DomainError(f"sigma must be positive, got {self.sigma}")
        if not (-1.0 < self.rho < 1.0):
            raise DomainError(f"rho must lie in (-1, 1), got {self.rho}")
        if not (self.alpha > 0.0):
            raise DomainError(f"alpha must be positive, got {self.alpha}")
        if not (self.beta > 0.0):
            raise DomainError(f"beta must be positive, got {self.beta}")

    @property
    def theta(self) -> float:
        return self.mu / self.sigma

    @property
    def psi_beta(self) -> float:
        return psi_laplace(self.beta, self.alpha)


class ConsumptionLaw(str, Enum):
    """The two candidate consumption-to-wealth fractions."""

    DERIVED_PSI_NUMERATOR = "derived_psi_numerator"
    PRINTED_521 = "printed_521"

    @property
    def description(self) -> str:
        if self is ConsumptionLaw.DERIVED_PSI_NUMERATOR:
            return "psi(beta) numerator assembled from the martingale identities"
        return "printed closed form with (1 - exp(-psi(beta))) numerator"


def check_no_arbitrage(p: MarketParams) -> bool:
    """True iff alpha > theta^2 / 2 (strict)."""
    return p.alpha > 0.5 * p.theta**2


def discounted_clock_target(p: MarketParams) -> float:
    """E[int_0^{tau_1} exp(-beta t) dkappa_t] = (1 - exp(-psi(beta)))/psi(beta)."""
    psi_b = p.psi_beta
    return -math.expm1(-psi_b) / psi_b


def g_potential(t: float, r: float, k: float, p: MarketParams) -> float:
    """Forward part of the discounted-clock potential at state (t, r, k).

    exp(-beta t) j(beta, |r|) (1 - exp(-(1-k) psi(beta))) / psi(beta); zero at
    k = 1.
    """
    if not (0.0 <= k <= 1.0):
        raise DomainError(f"clock value must lie in [0, 1], got {k}")
    psi_b = p.psi_beta
    bracket = -math.expm1(-(1.0 - k) * psi_b)
    return math.exp(-p.beta * t) * j_hitting(p.beta, abs(r), p.alpha) * bracket / psi_b


def consumption_fraction(law: ConsumptionLaw, kappa, psi_b: float):
    """Consumption-to-wealth fraction g(kappa) for kappa < 1 (vectorized)."""
    kappa = np.asarray(kappa, dtype=float)
    if np.any(kappa >= 1.0):
        raise DomainError("consumption fraction requires kappa < 1")
    denom = -np.expm1(-(1.0 - kappa) * psi_b)
    if law is ConsumptionLaw.DERIVED_PSI_NUMERATOR:
        out = psi_b / denom
    else:
        out = -math.expm1(-psi_b) / denom
    return float(out) if out.ndim == 0 else out


class _NuTable:
    """Dense interpolation of h on [0, z_max] with the 1/z tail beyond."""

    def __init__(self, beta: float, alpha: float, z_max: float = 12.0, n: int = 6001):
        self.alpha = alpha
        self.z_grid = np.linspace(0.0, z_max, n)
        self.h_grid = np.array([h_feedback(z, beta, alpha) for z in self.z_grid])
        self.z_max = z_max
        self.tail = self.h_grid[-1] * z_max  # z h(z) stabilizes for large z

    def h(self, z: np.ndarray) -> np.ndarray:
        out = np.interp(z, self.z_grid, self.h_grid)
        big = z > self.z_max
        if np.any(big):
            out = np.where(big, self.tail / np.maximum(z, 1e-300), out)
        return out

    def nu(self, r: np.ndarray) -> np.ndarray:
        root = math.sqrt(self.alpha)
        return root * np.sign(r) * self.h(np.abs(r) * root)


@lru_cache(maxsize=16)
def nu_feedback(beta: float, alpha: float) -> _NuTable:
    return _NuTable(beta, alpha)


def optimal_controls(
    x: float,
    r: float,
    kappa: float,
    s: float,
    p: MarketParams,
    law: ConsumptionLaw = ConsumptionLaw.DERIVED_PSI_NUMERATOR,
) -> tuple[float, float, float]:
    """Feedback controls (nu, pi, c_hat) at state (X, R, kappa, S).

    Exact scalar evaluation (no interpolation); kappa must be below 1.
    """
    if not (x >= 0.0):
        raise DomainError(f"wealth must be nonnegative, got {x}")
    if kappa >= 1.0:
        raise DomainError(f"controls are defined for kappa < 1, got {kappa}")
    if r == 0.0:
        nu = 0.0
    else:
        sign = 1.0 if r > 0.0 else -1.0
        root = math.sqrt(p.alpha)
        nu = sign * root * h_feedback(abs(r) * root, p.beta, p.alpha)
    pi = x * (p.theta + p.rho * nu) / (p.sigma * s)
    c_hat = x * consumption_fraction(law, kappa, p.psi_beta)
    return nu, pi, c_hat


@dataclass
class StrategyPath:
    """Joint trajectory of one optimal-control run, stopped at tau_1."""

    times: np.ndarray
    R: np.ndarray
    kappa: np.ndarray
    S: np.ndarray
    X: np.ndarray
    Z: np.ndarray
    c_hat: np.ndarray  # step-start consumption intensity, length n_steps
    nu: np.ndarray  # step-start
    pi: np.ndarray  # step-start
    M: np.ndarray
    psi_W: np.ndarray  # diagnostic dW-integrand X Z nu at step starts
    psi_B: np.ndarray  # identically zero, stored as stated
    tau1: float
    truncated: bool
    neg_wealth: bool


@dataclass(frozen=True)
class _Arm:
    name: str
    law: ConsumptionLaw
    cons_scale: float = 1.0
    hedge: bool = True  # include the rho*nu term in pi


def _arm_z0(arm: _Arm, x0: float, psi_b: float) -> float:
    """First-order-condition seed Z_0 = 1/c_hat(0)."""
    g0 = float(consumption_fraction(arm.law, 0.0, psi_b)) * arm.cons_scale
    return 1.0 / (x0 * g0)


@dataclass
class _PathAccum:
    """Per-path, per-arm summary rows collected by the ensemble driver."""

    utility: np.ndarray
    defect: np.ndarray
    x_end: np.ndarray
    m_end: np.ndarray
    z_ratio: np.ndarray
    budget: np.ndarray
    tau1: np.ndarray
    truncated: np.ndarray
    m_checkpoints: np.ndarray  # arm 0 only, shape (n, len(_CHECKPOINTS))


def _simulate_increments(rng, p: MarketParams, sim: OUConfig, epsilon: float, scale: float):
    """Evolve (R, kappa) until the clock reaches 1 or the horizon ends.

    Returns (xi_b, xi_w, r_grid, dk, truncated, tau1) where the step arrays
    have length n_used, r_grid has length n_used + 1 and the last clock
    increment is clamped so the clock ends exactly at 1 on stopped paths.

    The clock charge of step k is the band occupation of the PREVIOUS
    segment (predictable charging).  This keeps every increment of the
    deflated-value process M conditionally mean-zero in the discrete scheme:
    charging the step's own occupation correlates the clock increment with
    the dual-process step and injects an O(dt/epsilon) drift into M.
    """
    a, sd = _ou_coeffs(p.alpha, sim.dt)
    kconst = scale * sim.dt / epsilon
    n_total = sim.n_steps
    xi_b_parts, xi_w_parts, r_parts, dk_parts = [], [], [], []
    r_prev = sim.r0
    pending_frac = 0.0  # occupation of the segment before the current step
    k_off = 0.0
    done = 0
    block = 4096
    stop = None
    root = math.sqrt(1.0 - p.rho * p.rho)
    while done < n_total:
        m = min(block, n_total - done)
        xi_b = rng.standard_normal(m)
        xi_w = p.rho * xi_b + root * rng.standard_normal(m)
        r = _ou_steps(r_prev, a, xi_w * sd)
        r_from = np.concatenate(([r_prev], r[:-1]))
        frac = _band_fraction(r_from, r, epsilon)
        charged = np.concatenate(([pending_frac], frac[:-1]))
        pending_frac = float(frac[-1])
        dk = kconst * charged
        k = k_off + np.cumsum(dk)
        xi_b_parts.append(xi_b)
        xi_w_parts.append(xi_w)
        r_parts.append(r)
        dk_parts.append(dk)
        if k[-1] >= 1.0:
            stop = done + int(np.searchsorted(k, 1.0, side="left"))
            break
        r_prev = float(r[-1])
        k_off = float(k[-1])
        done += m
        block = min(2 * block, _OU_BLOCK_MAX)
    xi_b = np.concatenate(xi_b_parts)
    xi_w = np.concatenate(xi_w_parts)
    r_grid = np.concatenate([[sim.r0]] + r_parts)
    dk = np.concatenate(dk_parts)
    if stop is None:
        n_used = len(dk)
        truncated = True
        tau1 = sim.t_max
    else:
        n_used = stop + 1
        truncated = False
        kappa = np.cumsum(dk[:n_used])
        k_prev = kappa[-2] if n_used > 1 else 0.0
        frac = (1.0 - k_prev) / dk[n_used - 1]
        tau1 = (n_used - 1 + frac) * sim.dt
        dk = dk.copy()
        dk[n_used - 1] = 1.0 - k_prev  # clamp the final clock increment
    return (
        xi_b[:n_used],
        xi_w[:n_used],
        r_grid[: n_used + 1],
        dk[:n_used],
        truncated,
        tau1,
    )


_OU_BLOCK_MAX = 65536


def _one_path_summaries(
    rng,
    p: MarketParams,
    x0: float,
    sim: OUConfig,
    arms: tuple[_Arm, ...],
    epsilon: float,
    scale: float,
    table: _NuTable,
    collect_series: bool = False,
):
    xi_b, xi_w, r_grid, dk, truncated, tau1 = _simulate_increments(
        rng, p, sim, epsilon, scale
    )
    r_start = r_grid[:-1]
    n = len(dk)
    dt = sim.dt
    sqdt = math.sqrt(dt)
    t_start = np.arange(n) * dt
    kappa_start = np.concatenate(([0.0], np.cumsum(dk[:-1])))
    nu = table.nu(r_start)
    theta = p.theta
    w_full = theta + p.rho * nu
    # Exact geometric stock increments; dSrel = (S_{k+1} - S_k)/(sigma S_k).
    gross = np.exp((p.mu - 0.5 * p.sigma**2) * dt + p.sigma * sqdt * xi_b)
    ds_rel = (gross - 1.0) / p.sigma
    # Dual process in log coordinates with per-step quadratic variation.
    var_rate = nu**2 + w_full**2 - 2.0 * p.rho * nu * w_full
    dlnz = nu * sqdt * xi_w - w_full * sqdt * xi_b - 0.5 * var_rate * dt
    lnz = np.concatenate(([0.0], np.cumsum(dlnz)))
    z_unit = np.exp(lnz)  # Z/Z0 on the grid, length n+1
    disc = np.exp(-p.beta * t_start)
    psi_b = p.psi_beta

    n_arms = len(arms)
    utility = np.empty(n_arms)
    defect = np.zeros(n_arms, dtype=bool)
    x_end = np.empty(n_arms)
    m_end = np.empty(n_arms)
    z_ratio = np.empty(n_arms)
    budget = np.empty(n_arms)
    m_checkpoints = np.full(len(_CHECKPOINTS), np.nan)
    series = None

    for i, arm in enumerate(arms):
        g = arm.cons_scale * consumption_fraction(arm.law, kappa_start, psi_b)
        w = w_full if arm.hedge else np.full(n, theta)
        factors = 1.0 + w * ds_rel - g * dk
        x_grid = np.empty(n + 1)
        x_grid[0] = x0
        np.cumprod(factors, out=x_grid[1:])
        x_grid[1:] *= x0
        x_start = x_grid[:-1]
        c = x_start * g
        z0 = _arm_z0(arm, x0, psi_b)
        z_start = z0 * z_unit[:-1]
        dbudget = z_start * c * dk
        bud = float(np.sum(dbudget))
        charged = dk > 0.0
        bad = charged & (c <= 0.0)
        if np.any(bad):
            defect[i] = True
            utility[i] = np.nan
        else:
            logs = np.zeros(n)
            np.log(c, out=logs, where=charged)
            utility[i] = float(np.sum(disc * logs * dk))
        x_end[i] = x_grid[-1]
        z_ratio[i] = z_unit[-1]
        m_end[i] = x_grid[-1] * z0 * z_unit[-1] + bud
        budget[i] = bud
        if i == 0:
            m_grid = x_grid * (z0 * z_unit)
            m_grid[1:] += np.cumsum(dbudget)
            for ci, tc in enumerate(_CHECKPOINTS):
                idx = min(int(round(tc / dt)), n)
                m_checkpoints[ci] = m_grid[idx]
            if collect_series:
                series = _build_series(
                    p, arm, sim, n, x_grid, z0 * z_unit, kappa_start, dk, r_grid,
                    gross, nu, g, m_grid, tau1, truncated,
                )
    return (
        utility,
        defect,
        x_end,
        m_end,
        z_ratio,
        budget,
        tau1,
        truncated,
        m_checkpoints,
        series,
    )


def _build_series(
    p, arm, sim, n, x_grid, z_grid, kappa_start, dk, r_grid, gross, nu, g,
    m_grid, tau1, truncated,
) -> StrategyPath:
    times = np.arange(n + 1) * sim.dt
    kappa = np.concatenate((kappa_start, [kappa_start[-1] + dk[-1]]))
    s_grid = np.empty(n + 1)
    s_grid[0] = 1.0
    np.cumprod(gross, out=s_grid[1:])
    x_start = x_grid[:-1]
    c = x_start * g
    w = p.theta + p.rho * nu if arm.hedge else np.full(n, p.theta)
    pi = x_start * w / (p.sigma * s_grid[:-1])
    psi_w = x_start * z_grid[:-1] * nu
    return StrategyPath(
        times=times,
        R=r_grid,
        kappa=kappa,
        S=s_grid,
        X=x_grid,
        Z=z_grid,
        c_hat=c,
        nu=nu,
        pi=pi,
        M=m_grid,
        psi_W=psi_w,
        psi_B=np.zeros(n),
        tau1=tau1,
        truncated=truncated,
        neg_wealth=bool(np.any(x_grid <= 0.0)),
    )


def _strategy_chunk(args):
    (p, x0, sim, arms, epsilon, scale, start, stop) = args
    table = nu_feedback(p.beta, p.alpha)
    n = stop - start
    n_arms = len(arms)
    acc = _PathAccum(
        utility=np.empty((n, n_arms)),
        defect=np.zeros((n, n_arms), dtype=bool),
        x_end=np.empty((n, n_arms)),
        m_end=np.empty((n, n_arms)),
        z_ratio=np.empty((n, n_arms)),
        budget=np.empty((n, n_arms)),
        tau1=np.empty(n),
        truncated=np.zeros(n, dtype=bool),
        m_checkpoints=np.empty((n, len(_CHECKPOINTS))),
    )
    for i, idx in enumerate(range(start, stop)):
        out = _one_path_summaries(
            path_rng(sim.seed, idx), p, x0, sim, arms, epsilon, scale, table
        )
        (acc.utility[i], acc.defect[i], acc.x_end[i], acc.m_end[i],
         acc.z_ratio[i], acc.budget[i], acc.tau1[i], acc.truncated[i],
         acc.m_checkpoints[i], _) = out
    return acc


@dataclass
class EnsembleResult:
    """Per-path summaries for a set of strategy arms under common noise."""

    arms: tuple[_Arm, ...]
    x0: float
    dt: float
    utility: np.ndarray  # (n_paths, n_arms), nan on defective paths
    defect: np.ndarray
    x_end: np.ndarray
    m_end: np.ndarray
    z_ratio: np.ndarray
    budget: np.ndarray
    tau1: np.ndarray
    truncated: np.ndarray
    m_checkpoints: np.ndarray
    checkpoint_times: tuple[float, ...] = _CHECKPOINTS

    def arm_index(self, name: str) -> int:
        for i, a in enumerate(self.arms):
            if a.name == name:
                return i
        raise KeyError(name)

    def utility_estimate(self, arm: int | str = 0) -> tuple[McEstimate, float]:
        i = arm if isinstance(arm, int) else self.arm_index(arm)
        vals = self.utility[:, i]
        ok = ~np.isnan(vals)
        est = _stats(vals[ok])
        return est, float(np.mean(~ok))

    def mean_se(self, field_name: str, arm: int | str = 0) -> McEstimate:
        i = arm if isinstance(arm, int) else self.arm_index(arm)
        return _stats(getattr(self, field_name)[:, i])

    @property
    def truncated_fraction(self) -> float:
        return float(np.mean(self.truncated))


def simulate_optimal_run(
    p: MarketParams,
    x0: float,
    sim: OUConfig,
    law: ConsumptionLaw = ConsumptionLaw.DERIVED_PSI_NUMERATOR,
    *,
    normalization: float,
    epsilon: float | None = None,
    path_index: int = 0,
) -> StrategyPath:
    """One joint path of (S, R, kappa, X, Z, controls, M), stopped at tau_1."""
    if not check_no_arbitrage(p):
        raise DomainError(
            f"no-arbitrage condition alpha > theta^2/2 fails: "
            f"alpha={p.alpha}, theta={p.theta}"
        )
    if not (x0 > 0.0):
        raise DomainError(f"initial wealth must be positive, got {x0}")
    eps = default_epsilon(sim.dt) if epsilon is None else epsilon
    table = nu_feedback(p.beta, p.alpha)
    arm = _Arm(name="optimal", law=law)
    out = _one_path_summaries(
        path_rng(sim.seed, path_index), p, x0, sim, (arm,), eps, normalization,
        table, collect_series=True,
    )
    return out[-1]


def strategy_ensemble(
    p: MarketParams,
    x0: float,
    sim: OUConfig,
    arms: tuple[_Arm, ...],
    n_paths: int,
    *,
    normalization: float,
    epsilon: float | None = None,
    workers: int = 1,
) -> EnsembleResult:
    if not check_no_arbitrage(p):
        raise DomainError("no-arbitrage condition alpha > theta^2/2 fails")
    eps = default_epsilon(sim.dt) if epsilon is None else epsilon
    nu_feedback(p.beta, p.alpha)  # warm the table before forking workers
    bounds = _chunk_bounds(n_paths, workers)
    tasks = [(p, x0, sim, arms, eps, normalization, a, b) for a, b in bounds]
    if workers <= 1:
        parts = [_strategy_chunk(t) for t in tasks]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(_strategy_chunk, tasks))
    return EnsembleResult(
        arms=arms,
        x0=x0,
        dt=sim.dt,
        utility=np.vstack([c.utility for c in parts]),
        defect=np.vstack([c.defect for c in parts]),
        x_end=np.vstack([c.x_end for c in parts]),
        m_end=np.vstack([c.m_end for c in parts]),
        z_ratio=np.vstack([c.z_ratio for c in parts]),
        budget=np.vstack([c.budget for c in parts]),
        tau1=np.concatenate([c.tau1 for c in parts]),
        truncated=np.concatenate([c.truncated for c in parts]),
        m_checkpoints=np.vstack([c.m_checkpoints for c in parts]),
    )


def estimate_expected_utility(paths, f: UtilityField) -> tuple[McEstimate, float]:
    """Mean of int U(t, c_t) dkappa_t over an iterable of paths.

    Each path is a triple (times, consumption, dkappa) of equal-length arrays
    giving step-start times, step-start consumption intensity and the clock
    increment charged over each step.  Paths with nonpositive consumption on
    the support of dkappa are defects: excluded, with their fraction returned.
    """
    vals = []
    defects = 0
    for times, c, dk in paths:
        times = np.asarray(times, dtype=float)
        c = np.asarray(c, dtype=float)
        dk = np.asarray(dk, dtype=float)
        charged = dk > 0.0
        if np.any(charged & (c <= 0.0)):
            defects += 1
            continue
        integrand = np.zeros_like(dk)
        idx = np.nonzero(charged)[0]
        if idx.size:
            integrand[idx] = u_eval(f, times[idx], c[idx]) * dk[idx]
        vals.append(float(np.sum(integrand)))
    n_total = len(vals) + defects
    if not vals:
        raise DomainError("no admissible paths supplied")
    return _stats(np.asarray(vals)), defects / n_total


@dataclass
class LawVerdict:
    law: ConsumptionLaw
    budget: McEstimate
    budget_target: float
    budget_pass: bool
    x_end_abs: float
    x_end_abs_refined: float
    refinement_ratio: float
    refinement_pass: bool
    utility: McEstimate
    defect_fraction: float
    truncated_fraction: float


@dataclass
class AdjudicationReport:
    verdicts: list[LawVerdict]
    selected: ConsumptionLaw | None
    utility_margin: float  # selected minus other, nan when no selection
    utility_margin_se_paired: float
    utility_margin_se_pooled: float
    ensemble: EnsembleResult = field(repr=False)
    ensemble_refined: EnsembleResult = field(repr=False)


def adjudicate_consumption_law(
    p: MarketParams,
    x0: float,
    sim: OUConfig,
    n_paths: int,
    *,
    normalization: float,
    workers: int = 1,
    refinement_threshold: float = 0.8,
) -> AdjudicationReport:
    """Decide between the two consumption laws from their own identities.

    A law passes when its Monte Carlo budget integral E[int Z c dkappa]
    matches (1 - exp(-psi(beta)))/psi(beta) within 3 standard errors AND its
    terminal wealth residual shrinks under grid refinement.  Z is seeded per
    law by Z_0 = 1/c_hat(0), so the budget integral is exactly the quantity
    the optimality identities pin down.
    """
    if p.beta <= 0.0:
        raise DomainError("adjudication is specified for the discounted log field")
    arms = (
        _Arm(name="derived", law=ConsumptionLaw.DERIVED_PSI_NUMERATOR),
        _Arm(name="printed", law=ConsumptionLaw.PRINTED_521),
    )
    ens = strategy_ensemble(
        p, x0, sim, arms, n_paths, normalization=normalization, workers=workers
    )
    sim_half = OUConfig(
        alpha=sim.alpha, r0=sim.r0, dt=sim.dt / 2.0, t_max=sim.t_max,
        seed=sim.seed + 1,
    )
    ens_half = strategy_ensemble(
        p, x0, sim_half, arms, n_paths, normalization=normalization, workers=workers
    )
    # Z_0 = 1/c_hat(0) makes the budget integral scale-free in x0.
    target = discounted_clock_target(p)
    verdicts = []
    for i, arm in enumerate(arms):
        bud = _stats(ens.budget[:, i])
        bud_pass = abs(bud.mean - target) <= 3.0 * bud.std_error
        xa = float(np.mean(np.abs(ens.x_end[:, i])))
        xa_half = float(np.mean(np.abs(ens_half.x_end[:, i])))
        ratio = xa_half / xa if xa > 0 else math.inf
        util, dfrac = ens.utility_estimate(i)
        verdicts.append(
            LawVerdict(
                law=arm.law,
                budget=bud,
                budget_target=target,
                budget_pass=bud_pass,
                x_end_abs=xa,
                x_end_abs_refined=xa_half,
                refinement_ratio=ratio,
                refinement_pass=ratio <= refinement_threshold,
                utility=util,
                defect_fraction=dfrac,
                truncated_fraction=ens.truncated_fraction,
            )
        )
    passing = [v for v in verdicts if v.budget_pass and v.refinement_pass]
    selected = passing[0].law if len(passing) == 1 else None
    margin = math.nan
    se_paired = math.nan
    se_pooled = math.nan
    if selected is not None:
        i_sel = 0 if verdicts[0].law is selected else 1
        i_oth = 1 - i_sel
        both_ok = ~np.isnan(ens.utility[:, i_sel]) & ~np.isnan(ens.utility[:, i_oth])
        diff = ens.utility[both_ok, i_sel] - ens.utility[both_ok, i_oth]
        d = _stats(diff)
        margin, se_paired = d.mean, d.std_error
        se_pooled = math.hypot(
            verdicts[i_sel].utility.std_error, verdicts[i_oth].utility.std_error
        )
    return AdjudicationReport(
        verdicts=verdicts,
        selected=selected,
        utility_margin=margin,
        utility_margin_se_paired=se_paired,
        utility_margin_se_pooled=se_pooled,
        ensemble=ens,
        ensemble_refined=ens_half,
    )


@dataclass
class ArmComparison:
    name: str
    utility: McEstimate
    defect_fraction: float
    margin_vs_optimal: float
    margin_se_paired: float
    margin_se_pooled: float
    z_end: float
    m_end: float
    x_end_abs: float


@dataclass
class DominanceReport:
    arms: list[ArmComparison]
    n_paths: int
    truncated_fraction: float
    ensemble: EnsembleResult = field(repr=False)


def comparison_arms(law: ConsumptionLaw = ConsumptionLaw.DERIVED_PSI_NUMERATOR):
    """The optimal arm plus the four wealth-proportional perturbations."""
    return (
        _Arm(name="optimal", law=law),
        _Arm(name="consume_x0.7", law=law, cons_scale=0.7),
        _Arm(name="consume_x1.4", law=law, cons_scale=1.4),
        _Arm(name="merton_pi", law=law, hedge=False),
        _Arm(name="nu_zero_pi", law=law, hedge=False),
    )


def compare_strategies(
    p: MarketParams,
    x0: float,
    sim: OUConfig,
    n_paths: int,
    *,
    normalization: float,
    workers: int = 1,
) -> DominanceReport:
    """Expected-utility dominance of the optimal law over perturbed arms.

    All arms are wealth-proportional feedback laws evaluated on common random
    numbers; margins are reported with both the paired standard error (the
    CRN-consistent one) and the unpaired pooled standard error.
    """
    arms = comparison_arms()
    ens = strategy_ensemble(
        p, x0, sim, arms, n_paths, normalization=normalization, workers=workers
    )
    u_opt = ens.utility[:, 0]
    rows = []
    for i, arm in enumerate(arms):
        est, dfrac = ens.utility_estimate(i)
        if i == 0:
            margin, sep, sepool = 0.0, 0.0, 0.0
        else:
            ok = ~np.isnan(u_opt) & ~np.isnan(ens.utility[:, i])
            d = _stats(u_opt[ok] - ens.utility[ok, i])
            margin, sep = d.mean, d.std_error
            opt_est, _ = ens.utility_estimate(0)
            sepool = math.hypot(opt_est.std_error, est.std_error)
        rows.append(
            ArmComparison(
                name=arm.name,
                utility=est,
                defect_fraction=dfrac,
                margin_vs_optimal=margin,
                margin_se_paired=sep,
                margin_se_pooled=sepool,
                z_end=float(np.mean(ens.z_ratio[:, i])),
                m_end=float(np.mean(ens.m_end[:, i])),
                x_end_abs=float(np.mean(np.abs(ens.x_end[:, i]))),
            )
        )
    return DominanceReport(
        arms=rows,
        n_paths=n_paths,
        truncated_fraction=ens.truncated_fraction,
        ensemble=ens,
    )


@dataclass
class BoundReport:
    bound: float
    u_estimate: McEstimate
    defect_fraction: float
    passed: bool
    margin: float


def remark_bound_check(
    p: MarketParams,
    sim: OUConfig,
    n_paths: int,
    *,
    normalization: float,
    x0: float = 1.0,
    workers: int = 1,
    ensemble: EnsembleResult | None = None,
) -> BoundReport:
    """Check the finiteness bound u(1) <= 1 + (theta + (theta^2+1) sqrt(2 pi))/2."""
    if x0 != 1.0:
        raise DomainError("the bound check is stated at x0 = 1")
    theta = p.theta
    bound = x0 + 0.5 * (theta + (theta**2 + 1.0) * math.sqrt(2.0 * math.pi))
    if ensemble is None:
        ensemble = strategy_ensemble(
            p, x0, sim, (_Arm(name="optimal", law=ConsumptionLaw.DERIVED_PSI_NUMERATOR),),
            n_paths, normalization=normalization, workers=workers,
        )
    est, dfrac = ensemble.utility_estimate(0)
    return BoundReport(
        bound=bound,
        u_estimate=est,
        defect_fraction=dfrac,
        passed=est.mean <= bound,
        margin=bound - est.mean,
    )
