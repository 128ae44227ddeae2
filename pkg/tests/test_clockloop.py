"""Synchronization loop: stream derivation, batching equivalence, the
deterministic noiseless limit, stationary statistics, and the
closed-form correlated-sum identity."""

import math

import numpy as np
import pytest

from clocklab import analytic, clockloop, estimation, noise


def make_spec(zeta=0.0, diffusion=0.05, fisher_info=4.0, T=1.0, **kwargs):
    return clockloop.ClockSpec(
        T=T,
        noise_model=noise.Brownian(diffusion),
        reference=clockloop.GaussianReference(fisher_info),
        estimator=estimation.scaled_identity_estimator(zeta),
        **kwargs,
    )


class TestStreams:
    def test_replay_is_identical(self):
        a = clockloop.derive_stream(123, 5).standard_normal(8)
        b = clockloop.derive_stream(123, 5).standard_normal(8)
        assert np.array_equal(a, b)

    def test_indices_are_independent_streams(self):
        a = clockloop.derive_stream(123, 5).standard_normal(8)
        b = clockloop.derive_stream(123, 6).standard_normal(8)
        c = clockloop.derive_stream(124, 5).standard_normal(8)
        assert not np.array_equal(a, b)
        assert not np.array_equal(a, c)


class TestRunEquivalence:
    def test_single_trajectory_matches_ensemble_member(self):
        spec = make_spec(zeta=0.3)
        ensemble = clockloop.run_ensemble(spec, 500, 4, seed=9, base_index=2)
        for j, traj in enumerate(ensemble):
            solo = clockloop.run_trajectory(spec, 500, clockloop.derive_stream(9, 2 + j))
            assert np.array_equal(traj.y, solo.y)
            assert np.array_equal(traj.ybar, solo.ybar)
            assert np.array_equal(traj.phihat, solo.phihat)
            assert traj.seed_info == (9, 2 + j)

    def test_batching_does_not_change_results(self):
        spec = make_spec()
        full = clockloop.run_ensemble(spec, 200, 7, seed=4)
        small = clockloop.run_ensemble(spec, 200, 7, seed=4, batch_size=3)
        for a, b in zip(full, small):
            assert np.array_equal(a.y, b.y)

    def test_shapes(self):
        traj = clockloop.run_trajectory(make_spec(), 100, clockloop.derive_stream(0, 0))
        assert traj.y.shape == (101,)
        assert traj.ybar.shape == (100,)
        assert traj.phihat.shape == (100,)
        assert traj.n_cycles == 100


class TestDeterministicLimit:
    def test_perfect_reference_contracts_geometrically(self):
        # no noise + exact readout: y_{n+1} = zeta * y_n exactly
        spec = clockloop.ClockSpec(
            T=1.0,
            noise_model=noise.ZERO,
            reference=clockloop.GaussianReference(math.inf),
            estimator=estimation.scaled_identity_estimator(0.6),
            y0=0.8,
        )
        traj = clockloop.run_trajectory(spec, 40, clockloop.derive_stream(0, 0))
        expected = 0.8 * 0.6 ** np.arange(41)
        assert np.allclose(traj.y, expected, atol=1e-12)

    def test_perfect_reference_has_no_outcome_family(self):
        with pytest.raises(ValueError):
            clockloop.GaussianReference(math.inf).outcome_family()


class TestValidation:
    def test_spec_rejects_unstable_bias(self):
        with pytest.raises(ValueError):
            make_spec(zeta=1.0)

    def test_spec_requires_declared_zeta(self):
        est = estimation.Estimator(map=lambda a: a, declared_zeta=None)
        with pytest.raises(ValueError):
            clockloop.ClockSpec(
                T=1.0,
                noise_model=noise.ZERO,
                reference=clockloop.GaussianReference(4.0),
                estimator=est,
            )

    def test_spec_rejects_bad_period_and_guard(self):
        with pytest.raises(ValueError):
            make_spec(T=0.0)
        with pytest.raises(ValueError):
            make_spec(guard=0.0)

    def test_reference_validation(self):
        with pytest.raises(ValueError):
            clockloop.GaussianReference(0.0)
        with pytest.raises(ValueError):
            clockloop.GaussianReference(4.0, readout_variance=-0.1)
        with pytest.raises(ValueError):
            clockloop.RamseyReference(0.0, 1.0)

    def test_divergence_raises_instability(self):
        bad = estimation.Estimator(
            map=lambda a: -2.0 * np.asarray(a, dtype=float), declared_zeta=0.0
        )
        spec = clockloop.ClockSpec(
            T=1.0,
            noise_model=noise.Brownian(0.05),
            reference=clockloop.GaussianReference(4.0),
            estimator=bad,
            y0=1.0,
        )
        with pytest.raises(clockloop.InstabilityError):
            clockloop.run_trajectory(spec, 200, clockloop.derive_stream(0, 0))


class TestGaussianReference:
    def test_outcome_statistics(self):
        ref = clockloop.GaussianReference(4.0, readout_variance=0.25)
        rng = clockloop.derive_stream(7, 0)
        draws = ref.outcomes(np.full(50_000, 0.3), rng.standard_normal(50_000))
        assert abs(draws.mean() - 0.3) < 0.02
        assert abs(draws.var() - 0.5) < 0.02

    def test_outcome_family_fisher(self):
        family = clockloop.GaussianReference(4.0).outcome_family()
        assert estimation.fisher_information(family, 0.0) == pytest.approx(
            4.0, rel=1e-8
        )

    def test_degraded_outcome_family_fisher(self):
        family = clockloop.GaussianReference(4.0, readout_variance=0.25).outcome_family()
        assert estimation.fisher_information(family, 0.0) == pytest.approx(
            2.0, rel=1e-8
        )


class TestRamseyReference:
    def test_outcomes_are_fringe_bernoulli(self):
        ref = clockloop.RamseyReference(2.0, 1.5)
        rng = clockloop.derive_stream(11, 0)
        phi = 0.3
        draws = ref.outcomes(np.full(40_000, phi), rng.random(40_000))
        p = math.cos(2.0 * 1.5 * phi / 2.0) ** 2
        assert abs(draws.mean() - p) < 5.0 * math.sqrt(p * (1 - p) / 40_000)

    def test_outcome_family_fisher_off_center(self):
        ref = clockloop.RamseyReference(2.0, 1.5)
        family = ref.outcome_family()
        assert estimation.fisher_information(family, 0.25) == pytest.approx(
            ref.fisher_info, rel=1e-8
        )


@pytest.fixture(scope="module")
def ensemble():
    spec = make_spec(zeta=0.4)
    trajs = clockloop.run_ensemble(spec, 12_000, 24, seed=13)
    return spec, trajs, clockloop.pool_stats(trajs, burn_in=1500)


class TestStationaryStats:
    def test_matches_solvable_model(self, ensemble):
        spec, _, report = ensemble
        p = analytic.GaussianClockParams(f0=4.0, diffusion=0.05, zeta=0.4, T=1.0)
        assert abs(report.sigma2 - analytic.stationary_variance(p)) < (
            4.0 * report.sigma2_err
        )
        assert abs(
            report.clock_diffusion - analytic.stationary_clock_diffusion(p)
        ) < 4.0 * report.clock_diffusion_err

    def test_bias_ratio_and_correlations(self, ensemble):
        _, _, report = ensemble
        assert abs(report.zeta_hat - 0.4) < 4.0 * report.zeta_hat_err
        ratios = report.gamma[1:4] / report.gamma[0]
        assert np.abs(ratios - 0.4 ** np.arange(1, 4)).max() < 0.02

    def test_diffusion_routes_agree(self, ensemble):
        _, _, report = ensemble
        gap = report.clock_diffusion - report.clock_diffusion_block
        tol = 4.0 * math.hypot(
            report.clock_diffusion_err, report.clock_diffusion_block_err
        )
        assert abs(gap) < tol

    def test_noise_moments_recovered(self, ensemble):
        _, _, report = ensemble
        assert abs(report.alpha_hat - 1.0) < 4.0 * report.alpha_err
        assert abs(report.beta_hat - 3.0) < 4.0 * report.beta_err
        assert abs(report.sigma2_lo_hat - 0.1 / 3.0) < 4.0 * report.sigma2_lo_err

    def test_dick_gap_consistent_with_zero(self, ensemble):
        _, _, report = ensemble
        assert abs(report.dick_gap) < 4.0 * report.dick_gap_err

    def test_single_trajectory_segments(self, ensemble):
        spec, trajs, pooled = ensemble
        single = clockloop.stationary_stats(trajs[0], burn_in=1500)
        assert single.n_units == 32
        assert abs(single.sigma2 - pooled.sigma2) < 5.0 * math.hypot(
            single.sigma2_err, pooled.sigma2_err
        )

    def test_supermartingale_regression(self, ensemble):
        _, trajs, _ = ensemble
        fit = clockloop.supermartingale_check(trajs, burn_in=1500)
        assert abs(fit["slope"] - 0.4) < 4.0 * fit["slope_err"]
        assert abs(fit["intercept"]) < 4.0 * fit["intercept_err"]

    def test_bound_margins(self, ensemble):
        spec, _, report = ensemble
        margins = clockloop.bound_check(report, spec, 4.0)
        assert margins["gst_margin"] >= -3.0 * margins["gst_margin_err"]
        assert margins["cwfrw_margin"] >= -3.0 * margins["cwfrw_margin_err"]

    def test_report_consistency_fields(self, ensemble):
        _, _, report = ensemble
        assert report.sigma2 == report.gamma[0]
        assert report.T == 1.0 and report.zeta == 0.4
        assert report.n_units == 24


class TestStatsValidation:
    def test_burn_in_must_leave_data(self):
        traj = clockloop.run_trajectory(make_spec(), 100, clockloop.derive_stream(0, 0))
        with pytest.raises(ValueError):
            clockloop.stationary_stats(traj, burn_in=100)

    def test_max_lag_needs_length(self):
        traj = clockloop.run_trajectory(make_spec(), 400, clockloop.derive_stream(0, 0))
        with pytest.raises(ValueError):
            clockloop.stationary_stats(traj, burn_in=0, max_lag=50)

    def test_pooling_requires_matching_specs(self):
        a = clockloop.run_trajectory(make_spec(zeta=0.0), 300, clockloop.derive_stream(0, 0))
        b = clockloop.run_trajectory(make_spec(zeta=0.4), 300, clockloop.derive_stream(0, 1))
        with pytest.raises(ValueError):
            clockloop.pool_stats([a, b], burn_in=10, max_lag=5)

    def test_empty_pool_rejected(self):
        with pytest.raises(ValueError):
            clockloop.pool_stats([])


class TestAllanSimplified:
    def test_array_form(self):
        x = np.array([1.0, -1.0, 2.0, 0.0])
        value, stderr = clockloop.allan_simplified(x, T=2.0)
        assert value == pytest.approx(2.0 * 1.5, rel=1e-12)
        assert stderr > 0

    def test_array_form_requires_period(self):
        with pytest.raises(ValueError):
            clockloop.allan_simplified(np.ones(8))

    def test_trajectory_form_matches_model(self):
        spec = make_spec(zeta=0.0)
        traj = clockloop.run_trajectory(spec, 40_000, clockloop.derive_stream(3, 0))
        value, stderr = clockloop.allan_simplified(traj, burn_in=2000)
        p = analytic.GaussianClockParams(f0=4.0, diffusion=0.05, zeta=0.0, T=1.0)
        predicted = analytic.stationary_variance(p) + p.sigma2_lo
        assert abs(value - predicted) < 5.0 * stderr


class TestDickPrediction:
    def test_zero_noise_branch(self):
        m = noise.moments(noise.Brownian(0.0), 1.0)
        assert clockloop.dick_prediction(0.25, 0.5, m, 1.0) == pytest.approx(
            0.25 * 1.5 / 0.5, rel=1e-12
        )

    @pytest.mark.parametrize("zeta", [-0.6, 0.0, 0.3, 0.8])
    def test_matches_solvable_model_identity(self, zeta):
        # evaluated at the exact stationary variance, the spectral formula
        # must reproduce the solvable-model clock diffusion identically
        p = analytic.GaussianClockParams(f0=4.0, diffusion=0.05, zeta=zeta, T=1.0)
        m = noise.moments(noise.Brownian(0.05), 1.0)
        value = clockloop.dick_prediction(
            analytic.stationary_variance(p), zeta, m, 1.0
        )
        assert value == pytest.approx(
            analytic.stationary_clock_diffusion(p), rel=1e-12
        )

    def test_bias_domain(self):
        m = noise.moments(noise.Brownian(0.05), 1.0)
        with pytest.raises(ValueError):
            clockloop.dick_prediction(0.25, 1.0, m, 1.0)


class TestCorrelatedSumClosedForm:
    def test_reference_value(self):
        assert clockloop.edoca_closed_form(1.0, 0.5, 1) == pytest.approx(3.0)

    @pytest.mark.parametrize("zeta", [-0.7, -0.2, 0.0, 0.4, 0.9])
    def test_matches_brute_force(self, zeta):
        sigma2 = 1.3
        for n in (0, 1, 2, 5, 20):
            brute = sum(
                sigma2 * zeta ** abs(i - j)
                for i in range(n + 1)
                for j in range(n + 1)
            )
            assert clockloop.edoca_closed_form(sigma2, zeta, n) == pytest.approx(
                brute, rel=1e-12
            )

    def test_domain(self):
        with pytest.raises(ValueError):
            clockloop.edoca_closed_form(1.0, 1.0, 5)
        with pytest.raises(ValueError):
            clockloop.edoca_closed_form(1.0, 0.5, -1)
