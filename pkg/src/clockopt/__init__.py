"""Consumption optimization under an occupation-time stochastic clock.

Closed-form special functions and optimal controls for the mean-reverting
index example, Monte Carlo verification of the clock law and the martingale
and budget identities, and an exact primal/dual convex-duality solver on
finite scenario trees.
"""

from .clock import (
    CalibrationResult,
    ClockPath,
    McEstimate,
    McLaplaceResult,
    OUConfig,
    OUPath,
    calibrate_normalization,
    default_epsilon,
    first_hitting_time,
    inverse_local_time,
    mc_laplace_hitting,
    mc_laplace_tau,
    occupation_local_time,
    simulate_ou,
)
from .duality import (
    ClockWeights,
    DualSolution,
    EndowmentDensity,
    MartingalePolytope,
    PrimalSolution,
    ScenarioTree,
    binomial_tree,
    boundary_behavior_check,
    brute_force_oracle,
    build_density_process,
    conjugacy_check,
    hedging_prices,
    is_financeable,
    make_clock,
    martingale_vertices,
    recover_primal_from_dual,
    solve_dual,
    solve_primal,
    trinomial_tree,
)
from .errors import (
    ArbitrageError,
    CalibrationError,
    DomainError,
    InfeasibleError,
    NumericError,
    QuadratureError,
    UnboundedError,
)
from .special import (
    QuadratureSpec,
    gamma,
    h_feedback,
    hermite_dh,
    hermite_h,
    j_hitting,
    psi_laplace,
)
from .strategy import (
    ConsumptionLaw,
    MarketParams,
    StrategyPath,
    adjudicate_consumption_law,
    check_no_arbitrage,
    compare_strategies,
    estimate_expected_utility,
    g_potential,
    optimal_controls,
    remark_bound_check,
    simulate_optimal_run,
    strategy_ensemble,
)
from .utility import (
    UtilityField,
    asymptotic_elasticity,
    conjugate_v,
    inverse_marginal,
    marginal_utility,
    u_eval,
)

__version__ = "0.1.0"
