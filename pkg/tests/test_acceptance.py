"""Acceptance suite: every criterion at its stated tolerance and budget.

Run with `python3 -m pytest tests/test_acceptance.py -v -s` to see one
PASS/FAIL line per criterion.  The Monte Carlo criteria share expensive
ensembles through session fixtures; each criterion's runtime assertion
includes the fixture work it triggered.
"""

import math
import time

import numpy as np
import pytest

from clockopt.clock import (
    OUConfig,
    calibrate_normalization,
    clock_crossing_times,
    default_epsilon,
    hitting_allowance,
    mc_laplace_hitting,
    mc_laplace_tau,
    mc_tau_moment,
    tau_allowance,
)
from clockopt.cli import run
from clockopt.duality import (
    binomial_tree,
    boundary_behavior_check,
    brute_force_oracle,
    conjugacy_check,
    hedging_prices,
    make_clock,
    martingale_vertices,
    recover_primal_from_dual,
    solve_dual,
    solve_primal,
    trinomial_tree,
    zero_endowment,
)
from clockopt.errors import InfeasibleError
from clockopt.special import gamma, hermite_dh, hermite_h, j_hitting, psi_laplace
from clockopt.strategy import (
    ConsumptionLaw,
    MarketParams,
    adjudicate_consumption_law,
    compare_strategies,
    discounted_clock_target,
    remark_bound_check,
)
from clockopt.utility import UtilityField

SQRT_PI = math.sqrt(math.pi)
SQRT_2PI = math.sqrt(2.0 * math.pi)
MARKET = MarketParams(mu=0.2, sigma=1.0, rho=0.5, alpha=1.0, beta=0.5)
LOG0 = UtilityField(kind="log", beta=0.0)
SEED = 20260810
_timings: dict[str, float] = {}


def _report(num, name, passed, detail, elapsed, budget):
    status = "PASS" if passed else "FAIL"
    print(
        f"\nACCEPTANCE {num:>2} {status}  {name}: {detail} "
        f"[{elapsed:.1f}s / {budget:.0f}s]"
    )
    assert passed, f"criterion {num} ({name}): {detail}"
    assert elapsed < budget, f"criterion {num} exceeded runtime budget: {elapsed:.1f}s"


def _timed(key, fn):
    t0 = time.monotonic()
    out = fn()
    _timings[key] = time.monotonic() - t0
    return out


@pytest.fixture(scope="session")
def calibration():
    sim = OUConfig(alpha=1.0, r0=0.0, dt=1e-3, t_max=40.0, seed=SEED)
    return _timed(
        "calibration",
        lambda: calibrate_normalization(1.0, 1.0, sim, n_paths=10000),
    )


@pytest.fixture(scope="session")
def adjudication(calibration):
    sim = OUConfig(alpha=1.0, r0=0.0, dt=1e-3, t_max=40.0, seed=SEED + 1)
    return _timed(
        "adjudication",
        lambda: adjudicate_consumption_law(
            MARKET, 1.0, sim, 10000, normalization=calibration.normalization
        ),
    )


@pytest.fixture(scope="session")
def dominance(calibration):
    sim = OUConfig(alpha=1.0, r0=0.0, dt=1e-3, t_max=40.0, seed=SEED + 2)
    return _timed(
        "dominance",
        lambda: compare_strategies(
            MARKET, 1.0, sim, 20000, normalization=calibration.normalization
        ),
    )


def test_criterion_01_special_function_identities():
    t0 = time.monotonic()
    failures = []
    for x, target in ((0.5, SQRT_PI), (5.0, 24.0), (1.5, SQRT_PI / 2.0)):
        if abs(gamma(x) - target) / target > 1e-12:
            failures.append(f"gamma({x})")
    for xi in (-0.25, -0.5, -1.0, -2.5):
        lhs = hermite_h(xi, 0.0) * gamma((1.0 - xi) / 2.0)
        rhs = 2.0**xi * SQRT_PI
        if abs(lhs - rhs) / rhs > 1e-10:
            failures.append(f"duplication(xi={xi})")
    erfc_oracle = (SQRT_PI / 2.0) * math.e * math.erfc(1.0)
    if abs(hermite_h(-1.0, 1.0) - erfc_oracle) / erfc_oracle > 1e-8:
        failures.append("H_-1(1) vs erfc")
    for ratio in (0.5, 1.0, 2.0, 5.0):
        if abs(j_hitting(ratio, 0.0, 1.0) - 1.0) > 1e-9:
            failures.append(f"j normalization(ratio={ratio})")
    psi_target = 4.0 / SQRT_2PI
    if abs(psi_laplace(1.0, 1.0) - psi_target) / psi_target > 1e-10:
        failures.append("psi(alpha)")
    step = 1e-5
    for xi in (-0.6, -1.4):
        for x in np.linspace(0.05, 3.0, 10):
            fd = (hermite_h(xi, x + step) - hermite_h(xi, x - step)) / (2.0 * step)
            val = hermite_dh(xi, x)
            if abs(val - fd) / abs(val) > 1e-5:
                failures.append(f"derivative(xi={xi}, x={x:.2f})")
    elapsed = time.monotonic() - t0
    _report(
        1,
        "special-function identities",
        not failures,
        "all anchors hold" if not failures else f"failed: {failures}",
        elapsed,
        5.0,
    )


def test_criterion_02_clock_law(calibration):
    t0 = time.monotonic()
    c = calibration.normalization
    sim = OUConfig(alpha=1.0, r0=0.0, dt=1e-3, t_max=40.0, seed=SEED + 10)
    eps = default_epsilon(sim.dt)
    s_levels = [0.25, 0.5, 1.0]
    times = clock_crossing_times(sim, eps, c, s_levels, 10000)
    rows = []
    ok = True
    for lam in (0.5, 2.0):
        for i, s in enumerate(s_levels):
            res = mc_laplace_tau(
                1.0, lam, s, sim, 10000, c, crossing_times=times[:, i]
            )
            band = 3.0 * res.estimate.std_error + tau_allowance(lam, s, sim.dt, res.target)
            hit = abs(res.estimate.mean - res.target) <= band and res.valid
            ok = ok and hit
            rows.append(f"({lam},{s}):{'ok' if hit else 'MISS'}")
    tau_est, _ = mc_tau_moment(1.0, sim, 10000, c, crossing_times=times[:, 2])
    tau_ok = abs(tau_est.mean - SQRT_2PI) <= 3.0 * tau_est.std_error
    ok = ok and tau_ok
    elapsed = time.monotonic() - t0 + _timings["calibration"]
    _report(
        2,
        "inverse-clock transform law",
        ok,
        f"c={c:.4f}, {' '.join(rows)}, E[tau1]={tau_est.mean:.4f}"
        f" (target {SQRT_2PI:.4f}, se {tau_est.std_error:.4f})",
        elapsed,
        180.0,
    )


def test_criterion_03_hitting_transform():
    t0 = time.monotonic()
    sim = OUConfig(alpha=1.0, r0=0.0, dt=1e-3, t_max=40.0, seed=SEED + 20)
    ok = True
    rows = []
    for lam in (1.0, 2.0):
        for r in (0.5, 1.0):
            res = mc_laplace_hitting(1.0, lam, r, sim, 10000)
            band = 3.0 * res.estimate.std_error + hitting_allowance(lam, sim.dt)
            hit = abs(res.estimate.mean - res.target) <= band and res.valid
            ok = ok and hit
            rows.append(
                f"({lam},{r}): est {res.estimate.mean:.4f} vs {res.target:.4f}"
                f" {'ok' if hit else 'MISS'}"
            )
    elapsed = time.monotonic() - t0
    _report(3, "hitting-time transform", ok, "; ".join(rows), elapsed, 60.0)


def test_criterion_04_martingale_budget_suite(adjudication):
    t0 = time.monotonic()
    ens = adjudication.ensemble
    i = ens.arm_index("derived")
    z = ens.z_ratio[:, i]
    z_se = z.std(ddof=1) / math.sqrt(len(z))
    z_ok = abs(z.mean() - 1.0) <= 3.0 * z_se
    m = ens.m_end[:, i]
    m_se = m.std(ddof=1) / math.sqrt(len(m))
    target = discounted_clock_target(MARKET)
    m_ok = abs(m.mean() - target) <= 3.0 * m_se
    verdict = next(v for v in adjudication.verdicts if v.law is ConsumptionLaw.DERIVED_PSI_NUMERATOR)
    x_ok = verdict.refinement_ratio <= 0.7
    ok = z_ok and m_ok and x_ok
    elapsed = time.monotonic() - t0 + _timings["adjudication"]
    _report(
        4,
        "martingale and budget suite",
        ok,
        f"E[Z]/Z0={z.mean():.4f}({'ok' if z_ok else 'MISS'}), "
        f"E[M]={m.mean():.5f} vs {target:.5f}({'ok' if m_ok else 'MISS'}), "
        f"E|X| ratio={verdict.refinement_ratio:.3f}({'ok' if x_ok else 'MISS'})",
        elapsed,
        180.0,
    )


def test_criterion_05_consumption_law_adjudication(adjudication):
    t0 = time.monotonic()
    passing = [
        v.law.value
        for v in adjudication.verdicts
        if v.budget_pass and v.refinement_pass
    ]
    ok = len(passing) == 1 and adjudication.selected is not None
    detail = []
    for v in adjudication.verdicts:
        detail.append(
            f"{v.law.value}: budget {v.budget.mean:.4f}/{v.budget_target:.4f}"
            f"({'pass' if v.budget_pass else 'fail'}), "
            f"refine {v.refinement_ratio:.3f}({'pass' if v.refinement_pass else 'fail'}),"
            f" u={v.utility.mean:.4f}"
        )
    elapsed = time.monotonic() - t0
    _report(
        5,
        "consumption-law adjudication",
        ok,
        f"selected={adjudication.selected.value if adjudication.selected else 'none'}; "
        + " | ".join(detail),
        elapsed,
        60.0,
    )


def test_criterion_06_strategy_dominance(dominance, calibration):
    t0 = time.monotonic()
    ok = True
    rows = []
    for arm in dominance.arms[1:]:
        hit = arm.margin_vs_optimal >= 2.0 * arm.margin_se_pooled
        ok = ok and hit
        rows.append(
            f"{arm.name}: margin {arm.margin_vs_optimal:+.4f}"
            f" (2se_pooled {2.0 * arm.margin_se_pooled:.4f},"
            f" 2se_paired {2.0 * arm.margin_se_paired:.4f})"
            f" {'ok' if hit else 'MISS'}"
        )
    # With rho = 0 the unhedged arm coincides with the optimum.
    p0 = MarketParams(mu=0.2, sigma=1.0, rho=0.0, alpha=1.0, beta=0.5)
    sim0 = OUConfig(alpha=1.0, r0=0.0, dt=1e-3, t_max=40.0, seed=SEED + 3)
    rep0 = compare_strategies(p0, 1.0, sim0, 2000, normalization=calibration.normalization)
    tie = next(a for a in rep0.arms if a.name == "nu_zero_pi")
    tie_ok = abs(tie.margin_vs_optimal) <= 2.0 * max(tie.margin_se_pooled, 1e-12)
    ok = ok and tie_ok
    rows.append(f"rho=0 tie margin {tie.margin_vs_optimal:+.1e} {'ok' if tie_ok else 'MISS'}")
    elapsed = time.monotonic() - t0 + _timings["dominance"]
    _report(6, "strategy dominance", ok, "; ".join(rows), elapsed, 300.0)


def test_criterion_07_value_bound(dominance):
    t0 = time.monotonic()
    rep = remark_bound_check(
        MARKET,
        OUConfig(alpha=1.0, r0=0.0, dt=1e-3, t_max=40.0, seed=SEED + 2),
        20000,
        normalization=1.0,  # unused: the shared ensemble is passed in
        ensemble=dominance.ensemble,
    )
    elapsed = time.monotonic() - t0
    _report(
        7,
        "log-value finiteness bound",
        rep.passed,
        f"u(1)={rep.u_estimate.mean:.4f} <= bound {rep.bound:.4f}"
        f" (margin {rep.margin:.4f})",
        elapsed,
        300.0,
    )


def test_criterion_08_binomial_closed_forms():
    t0 = time.monotonic()
    tree = binomial_tree()
    poly = martingale_vertices(tree)
    clock = make_clock(tree, "terminal")
    primal = solve_primal(tree, poly, clock, LOG0, 1.0)
    dual = solve_dual(tree, poly, clock, LOG0, 1.0)
    u_target = 0.5 * math.log(9.0 / 8.0)
    checks = {
        "u(1)": abs(primal.u_value - u_target) <= 1e-8,
        "v(1)": abs(dual.v_value - (-1.0 + u_target)) <= 1e-8,
        "c_up": abs(primal.c[tree.leaves[0]] - 1.5) <= 1e-8,
        "c_down": abs(primal.c[tree.leaves[1]] - 0.75) <= 1e-8,
        "q": poly.n_vertices == 1
        and abs(poly.vertices[0].conditional[1] - 1.0 / 3.0) <= 1e-14,
    }
    elapsed = time.monotonic() - t0
    _report(
        8,
        "binomial closed forms",
        all(checks.values()),
        f"u(1)={primal.u_value:.9f}, v(1)={dual.v_value:.9f}, "
        f"checks={ {k: ('ok' if v else 'MISS') for k, v in checks.items()} }",
        elapsed,
        1.0,
    )


def test_criterion_09_duality_certification():
    t0 = time.monotonic()
    tree = trinomial_tree(depth=2)
    poly = martingale_vertices(tree)
    clock = make_clock(tree, "terminal")
    e = zero_endowment(tree)
    upup = [int(l) for l in tree.leaves if tree.prices[l, 0] == 4.0][0]
    e.values[upup] = 1.0
    conj = conjugacy_check(
        tree, poly, clock, LOG0, e,
        x_grid=[0.5, 0.75, 1.0, 1.5, 2.0],
        y_grid=[0.25, 0.5, 1.0, 2.0, 4.0],
    )
    dual = solve_dual(tree, poly, clock, LOG0, 1.0, e)
    _, rec = recover_primal_from_dual(tree, poly, clock, LOG0, e, dual)
    h = 1e-4
    fd = (
        solve_dual(tree, poly, clock, LOG0, 1.0 + h, e).v_value
        - solve_dual(tree, poly, clock, LOG0, 1.0 - h, e).v_value
    ) / (2.0 * h)
    fd_ok = abs(fd - dual.v_prime) / abs(dual.v_prime) <= 1e-4
    lower, _ = hedging_prices(tree, poly, e.terminal_claim(tree, clock))
    neg_vp = -solve_dual(tree, poly, clock, LOG0, 1e4, e).v_prime
    boundary_ok = abs(neg_vp - lower) <= 0.01
    infeasible_ok = False
    try:
        solve_primal(tree, poly, clock, LOG0, -lower - 0.1, e)
    except InfeasibleError:
        infeasible_ok = True
    checks = {
        "conjugacy<=1e-5": max(conj.max_gap_u, conj.max_gap_v) <= 1e-5,
        "recover<=1e-6": rec["max_consumption_diff"] <= 1e-6,
        "fd_vprime<=1e-4": fd_ok,
        "-v'(1e4)~L": boundary_ok,
        "infeasible_raises": infeasible_ok,
    }
    elapsed = time.monotonic() - t0
    _report(
        9,
        "duality certification",
        all(checks.values()),
        f"gaps=({conj.max_gap_u:.2e},{conj.max_gap_v:.2e}), "
        f"recover={rec['max_consumption_diff']:.2e}, "
        f"-v'(1e4)={neg_vp:.4f} vs L={lower:.4f}, "
        f"checks={ {k: ('ok' if v else 'MISS') for k, v in checks.items()} }",
        elapsed,
        30.0,
    )


def test_criterion_10_oracle_equivalence():
    t0 = time.monotonic()
    tree = binomial_tree(depth=2)
    poly = martingale_vertices(tree)
    clock = make_clock(tree, "uniform")
    e = zero_endowment(tree)
    e.values[1] = 0.4
    primal = solve_primal(tree, poly, clock, LOG0, 1.0, e)
    oracle = brute_force_oracle(tree, poly, clock, LOG0, 1.0, e, refinements=3)
    diff = abs(primal.u_value - oracle.value)
    elapsed = time.monotonic() - t0
    _report(
        10,
        "brute-force oracle equivalence",
        diff <= 1e-3,
        f"solver {primal.u_value:.6f} vs oracle {oracle.value:.6f} (diff {diff:.2e})",
        elapsed,
        30.0,
    )


def test_criterion_11_determinism(tmp_path):
    t0 = time.monotonic()
    fast = [
        "sim.n_paths=80",
        "sim.dt=0.005",
        "sim.seed=314159",
        "clock.normalization=0.353",
        "clock.validation_lambdas=[1.0]",
        "clock.validation_s=[0.5]",
        "hitting.lambdas=[1.0]",
        "hitting.r0s=[1.0]",
        "tree.x_grid=[0.5,1.0,2.0]",
        "tree.y_grid=[0.5,1.0,2.0]",
        "utility.beta=0.0",
    ]
    subcommands = [
        "special verify",
        "clock calibrate",
        "clock validate",
        "strategy simulate",
        "strategy adjudicate",
        "strategy compare",
        "strategy bound",
        "duality solve",
        "duality check",
        "duality oracle",
    ]
    mismatches = []
    for sub in subcommands:
        slug = sub.replace(" ", "_")
        outputs = {}
        for tag, workers in (("a", 1), ("b", 1), ("c", 4)):
            args = fast + [f"sim.workers={workers}", f"output={tmp_path}/{tag}{slug}"]
            code = run(None, sub, args)
            assert code in (0, 1), f"{sub} returned {code}"
            body = (
                (tmp_path / f"{tag}{slug}_{slug}.csv").read_text().splitlines()[2:]
            )
            outputs[tag] = body
        if outputs["a"] != outputs["b"]:
            mismatches.append(f"{sub}: rerun differs")
        if outputs["a"] != outputs["c"]:
            mismatches.append(f"{sub}: workers 1 vs 4 differ")
    elapsed = time.monotonic() - t0
    _report(
        11,
        "determinism across reruns and workers {1,4}",
        not mismatches,
        "all subcommands byte-stable" if not mismatches else "; ".join(mismatches),
        elapsed,
        600.0,
    )
