"""Index-process simulation, occupation clock and Monte Carlo transforms."""

import math

import numpy as np
import pytest
from scipy import stats

from clockopt.clock import (
    CalibrationResult,
    ClockPath,
    McEstimate,
    OUConfig,
    calibrate_normalization,
    clock_crossing_times,
    default_epsilon,
    first_hitting_time,
    inverse_local_time,
    mc_laplace_hitting,
    mc_laplace_tau,
    mc_tau_moment,
    occupation_local_time,
    simulate_ou,
)
from clockopt.errors import CalibrationError, DomainError
from clockopt.special import j_hitting

SQRT_2PI = math.sqrt(2.0 * math.pi)

# Calibrated occupation constant for (alpha=1, dt=1e-3, eps=sqrt(dt)); pinned
# by the calibration tests below and reused where an approximate value is fine.
NORM_1E3 = 0.3527


def _cfg(**kw):
    base = dict(alpha=1.0, r0=0.0, dt=1e-3, t_max=40.0, seed=42)
    base.update(kw)
    return OUConfig(**base)


class TestConfig:
    def test_validation(self):
        with pytest.raises(DomainError):
            OUConfig(alpha=0.0)
        with pytest.raises(DomainError):
            OUConfig(alpha=1.0, dt=0.05)
        with pytest.raises(DomainError):
            OUConfig(alpha=1.0, t_max=5.0)

    def test_default_horizon(self):
        assert OUConfig(alpha=2.0).t_max == pytest.approx(20.0)


class TestSimulateOU:
    def test_deterministic_from_seed(self):
        a = simulate_ou(_cfg())
        b = simulate_ou(_cfg())
        assert np.array_equal(a.values, b.values)
        c = simulate_ou(_cfg(), path_index=1)
        assert not np.array_equal(a.values, c.values)

    def test_zero_noise_stays_at_zero(self):
        path = simulate_ou(_cfg(dt=1e-2), noise_scale=0.0)
        assert np.all(path.values == 0.0)

    def test_zero_noise_decays_from_r0(self):
        cfg = _cfg(r0=2.0, dt=1e-2)
        path = simulate_ou(cfg, noise_scale=0.0)
        expected = 2.0 * np.exp(-cfg.alpha * path.times)
        assert np.allclose(path.values, expected, atol=1e-12)

    def test_exact_marginal_ks(self):
        # Kolmogorov-Smirnov of R_t against the exact Gaussian transition law.
        cfg = _cfg(r0=0.3, dt=1e-2, t_max=10.0)
        t_idx = 100  # t = 1.0
        n = 10000
        samples = np.empty(n)
        for p in range(n):
            samples[p] = simulate_ou(cfg, path_index=p).values[t_idx]
        t = cfg.dt * t_idx
        mean = cfg.r0 * math.exp(-cfg.alpha * t)
        sd = math.sqrt((1.0 - math.exp(-2.0 * cfg.alpha * t)) / (2.0 * cfg.alpha))
        stat = stats.kstest(samples, stats.norm(loc=mean, scale=sd).cdf).statistic
        assert stat < 1.6276 / math.sqrt(n)  # 1% critical value

    def test_terminal_moments(self):
        cfg = _cfg(dt=1e-2, t_max=10.0)
        n = 4000
        finals = np.array([simulate_ou(cfg, path_index=p).values[-1] for p in range(n)])
        se_mean = finals.std(ddof=1) / math.sqrt(n)
        assert abs(finals.mean()) <= 3.0 * se_mean
        var = finals.var(ddof=1)
        se_var = var * math.sqrt(2.0 / (n - 1))
        assert abs(var - 0.5) <= 3.0 * se_var


class TestOccupationClock:
    def test_all_outside_band_gives_zero(self):
        path = simulate_ou(_cfg(dt=1e-2))
        path.values[:] = 5.0 + 0.1 * np.sin(np.arange(len(path.values)))
        clock = occupation_local_time(path, epsilon=0.1, normalization=0.5)
        assert np.all(clock.kappa == 0.0)

    def test_constant_zero_gives_linear_clock(self):
        path = simulate_ou(_cfg(dt=1e-2), noise_scale=0.0)
        clock = occupation_local_time(path, epsilon=0.1, normalization=0.5)
        expected = (0.5 / 0.1) * path.times
        assert np.allclose(clock.kappa, expected, rtol=1e-12)

    def test_flat_where_excursion_outside(self):
        path = simulate_ou(_cfg(dt=1e-2, seed=7))
        eps = 0.05
        clock = occupation_local_time(path, epsilon=eps, normalization=0.5)
        increments = np.diff(clock.kappa)
        r = path.values
        both_out_same_side = (np.minimum(np.abs(r[:-1]), np.abs(r[1:])) >= eps) & (
            r[:-1] * r[1:] > 0.0
        )
        assert np.all(increments[both_out_same_side] == 0.0)
        assert np.all(np.diff(clock.kappa) >= 0.0)

    def test_linear_rescale(self):
        path = simulate_ou(_cfg(dt=1e-2, seed=3))
        c1 = occupation_local_time(path, epsilon=0.05, normalization=0.5)
        c2 = occupation_local_time(path, epsilon=0.05, normalization=1.0)
        s = 0.8 * c1.kappa[-1]
        t1 = inverse_local_time(c1, s / 2.0)
        t2 = inverse_local_time(c2, s)
        assert t1.time == t2.time and t1.truncated == t2.truncated


class TestInverseLocalTime:
    def test_truncation_flag(self):
        path = simulate_ou(_cfg(dt=1e-2, seed=5))
        clock = occupation_local_time(path, epsilon=0.05, normalization=0.5)
        out = inverse_local_time(clock, clock.kappa[-1] + 1.0)
        assert out.truncated

    def test_monotone_and_right_inverse(self):
        path = simulate_ou(_cfg(dt=1e-2, seed=6))
        clock = occupation_local_time(path, epsilon=0.05, normalization=0.5)
        top = clock.kappa[-1]
        levels = np.linspace(0.05, 0.9, 9) * top
        times = [inverse_local_time(clock, s) for s in levels]
        assert all(not t.truncated for t in times)
        assert all(a.time <= b.time for a, b in zip(times, times[1:]))
        for s, t in zip(levels, times):
            idx = int(round(t.time / 1e-2))
            assert clock.kappa[idx] >= s

    def test_domain(self):
        path = simulate_ou(_cfg(dt=1e-2, seed=6))
        clock = occupation_local_time(path, epsilon=0.05, normalization=0.5)
        with pytest.raises(DomainError):
            inverse_local_time(clock, 0.0)


class TestHittingTime:
    def test_already_at_zero(self):
        out = first_hitting_time(_cfg(r0=0.0))
        assert out.time == 0.0 and not out.truncated

    def test_pathwise_monotone_in_start(self):
        # Common noise: starting farther away hits later path by path.
        for seed in (1, 2, 3, 4, 5):
            t1 = first_hitting_time(_cfg(r0=0.5, seed=seed, dt=1e-2))
            t2 = first_hitting_time(_cfg(r0=1.5, seed=seed, dt=1e-2))
            assert t2.time >= t1.time

    def test_mc_matches_transform(self):
        sim = _cfg(dt=1e-3, seed=11)
        res = mc_laplace_hitting(1.0, 1.0, 1.0, sim, 3000)
        allowance = 2.0 * math.sqrt(sim.dt) * 1.0
        assert res.target == pytest.approx(j_hitting(1.0, 1.0, 1.0))
        assert abs(res.estimate.mean - res.target) <= (
            3.0 * res.estimate.std_error + allowance
        )
        assert res.valid


class TestMcEstimate:
    def test_std_error_definition(self):
        sim = _cfg(dt=2e-3, seed=21)
        res = mc_laplace_tau(1.0, 1.0, 0.5, sim, 400, NORM_1E3)
        times = clock_crossing_times(sim, default_epsilon(sim.dt), NORM_1E3, [0.5], 400)
        vals = np.exp(-np.where(np.isnan(times[:, 0]), sim.t_max, times[:, 0]))
        assert res.estimate.mean == pytest.approx(vals.mean())
        assert res.estimate.std_error == pytest.approx(
            vals.std(ddof=1) / math.sqrt(400)
        )

    def test_s_zero_is_exact_one(self):
        res = mc_laplace_tau(1.0, 2.0, 0.0, _cfg(), 100, NORM_1E3)
        assert res.estimate.mean == 1.0 and res.estimate.std_error == 0.0

    def test_decreasing_in_lambda(self):
        sim = _cfg(dt=2e-3, seed=33)
        times = clock_crossing_times(sim, default_epsilon(sim.dt), NORM_1E3, [0.5], 500)
        means = [
            mc_laplace_tau(1.0, lam, 0.5, sim, 500, NORM_1E3,
                           crossing_times=times[:, 0]).estimate.mean
            for lam in (0.5, 1.0, 2.0, 4.0)
        ]
        assert all(a > b for a, b in zip(means, means[1:]))


class TestCalibration:
    def test_calibrates_and_matches_tau_mean(self):
        sim = _cfg(seed=101)
        cal = calibrate_normalization(1.0, 1.0, sim, n_paths=2500)
        assert 0.125 < cal.normalization < 1.0
        assert cal.truncated_fraction <= 0.01
        assert abs(cal.tau1_mean - SQRT_2PI) <= 3.0 * cal.tau1_std_error

    def test_seed_stability(self):
        c1 = calibrate_normalization(1.0, 1.0, _cfg(seed=201), n_paths=1500).normalization
        c2 = calibrate_normalization(1.0, 1.0, _cfg(seed=202), n_paths=1500).normalization
        assert abs(c1 - c2) <= 0.1 * max(c1, c2)

    def test_bracket_error(self):
        with pytest.raises(CalibrationError):
            calibrate_normalization(
                1.0, 1.0, _cfg(seed=7), n_paths=200, bracket=(20.0, 40.0)
            )

    def test_out_of_sample_transform(self):
        cal = calibrate_normalization(1.0, 1.0, _cfg(seed=303), n_paths=2500)
        sim = _cfg(seed=304)
        res = mc_laplace_tau(1.0, 2.0, 0.5, sim, 2500, cal.normalization)
        band = 3.0 * res.estimate.std_error + 2.0 * 2.0 * 0.5 * math.sqrt(sim.dt) * res.target
        assert abs(res.estimate.mean - res.target) <= band


class TestRefinementConsistency:
    def test_halving_dt_and_epsilon(self):
        norm = 0.36
        lam, s = 1.0, 0.5
        coarse_sim = _cfg(dt=2e-3, seed=55)
        fine_sim = _cfg(dt=1e-3, seed=56)
        coarse = mc_laplace_tau(
            1.0, lam, s, coarse_sim, 1500, norm, epsilon=default_epsilon(2e-3)
        )
        fine = mc_laplace_tau(
            1.0, lam, s, fine_sim, 1500, norm, epsilon=default_epsilon(2e-3) / 2.0
        )
        pooled = math.hypot(coarse.estimate.std_error, fine.estimate.std_error)
        assert abs(coarse.estimate.mean - fine.estimate.mean) <= 3.0 * pooled


class TestWorkerDeterminism:
    def test_crossing_times_worker_invariant(self):
        sim = _cfg(dt=5e-3, seed=77)
        eps = default_epsilon(sim.dt)
        a = clock_crossing_times(sim, eps, 0.36, [0.25, 0.5], 60, workers=1)
        b = clock_crossing_times(sim, eps, 0.36, [0.25, 0.5], 60, workers=2)
        assert np.array_equal(a, b, equal_nan=True)

    def test_tau_moment_matches(self):
        sim = _cfg(dt=5e-3, seed=78)
        m1, f1 = mc_tau_moment(0.5, sim, 50, 0.36, workers=1)
        m2, f2 = mc_tau_moment(0.5, sim, 50, 0.36, workers=2)
        assert m1 == m2 and f1 == f2
