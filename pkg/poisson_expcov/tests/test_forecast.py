from __future__ import annotations

import math
import unittest

import numpy as np
from scipy import stats

from poisson_expcov.inference.covariance import build_correlation
from poisson_expcov.prediction.forecast import (
    MAX_SUPPORT,
    distribution_from_rates,
    equal_tailed_interval,
    forecast_horizon,
    pmf_from_rates,
    predictive_distribution,
    w_new_moments,
)
from poisson_expcov.sampling.rng import RngStream
from poisson_expcov.shared.errors import ModelError
from poisson_expcov.shared.series import ChainState, ObservedSeries, PosteriorSamples, TimeIndex


def _samples(n_draws: int, *, sigma2: float = 0.05, sigmaw2: float = 0.2) -> PosteriorSamples:
    rng = np.random.default_rng(9)
    draws = [
        ChainState(
            beta=[1.0 + 0.05 * rng.standard_normal(), 0.3],
            sigma2=sigma2,
            sigmaw2=sigmaw2,
            w=0.1 * rng.standard_normal(4),
            mu=np.log([3.0, 4.0, 2.0, 5.0]),
        )
        for _ in range(n_draws)
    ]
    return PosteriorSamples(draws=draws, phi_used=0.5, burn_sweeps_used=100, chain_ids=[0] * n_draws, thin=11)


def _series() -> ObservedSeries:
    design = np.column_stack([np.ones(4), [0.0, 1.0, -1.0, 0.5]])
    return ObservedSeries(index=TimeIndex([1.0, 2.0, 3.0, 4.0]), counts=[3, 4, 2, 5], design=design)


class PmfFromRatesTest(unittest.TestCase):
    def test_mixture_matches_scipy(self) -> None:
        rates = np.array([2.0, 5.0, 11.0])

        pmf = pmf_from_rates(rates)

        counts = np.arange(pmf.shape[0])
        expected = stats.poisson.pmf(counts[:, None], rates[None, :]).mean(axis=1)
        np.testing.assert_allclose(pmf, expected, rtol=1e-12, atol=1e-15)
        self.assertGreater(pmf.sum(), 1.0 - 1e-8)

    def test_support_stops_at_first_small_tail(self) -> None:
        rates = np.array([4.0, 6.0])

        pmf = pmf_from_rates(rates, tail_mass=1e-6)

        k_trunc = pmf.shape[0] - 1
        tail = stats.poisson.sf(np.arange(k_trunc + 1)[:, None], rates[None, :]).mean(axis=1)
        self.assertLess(tail[k_trunc], 1e-6)
        self.assertGreaterEqual(tail[k_trunc - 1], 1e-6)

    def test_zero_rate_puts_all_mass_at_zero(self) -> None:
        np.testing.assert_allclose(pmf_from_rates(np.array([0.0])), [1.0])

    def test_bad_rates_are_rejected(self) -> None:
        with self.assertRaises(ModelError) as empty:
            pmf_from_rates(np.array([]))
        with self.assertRaises(ModelError) as negative:
            pmf_from_rates(np.array([1.0, -0.5]))

        self.assertEqual(empty.exception.code, "EMPTY_POSTERIOR")
        self.assertEqual(negative.exception.code, "INVALID_PMF")

    def test_support_beyond_cap_is_rejected_before_allocation(self) -> None:
        for rate in (2.0e6, 1.0e300):
            with self.subTest(rate=rate):
                with self.assertRaises(ModelError) as ctx:
                    pmf_from_rates(np.array([3.0, rate]))
                self.assertEqual(ctx.exception.code, "INVALID_PARAMETER")
                self.assertEqual(ctx.exception.details["max_rate"], rate)

    def test_large_rates_below_cap_still_mix(self) -> None:
        pmf = pmf_from_rates(np.array([8000.0, 9000.0]))

        self.assertLess(pmf.shape[0], MAX_SUPPORT)
        self.assertAlmostEqual(float(np.arange(pmf.shape[0]) @ pmf), 8500.0, delta=1e-3)


class IntervalTest(unittest.TestCase):
    def test_interval_covers_level(self) -> None:
        distribution = distribution_from_rates(0.0, np.array([3.0, 8.0, 20.0]), level=0.9)

        lo, hi = distribution.interval
        cdf = distribution.cdf()
        self.assertGreaterEqual(cdf[hi] - (cdf[lo - 1] if lo else 0.0), 0.9)
        self.assertEqual(distribution.violations(), [])
        self.assertAlmostEqual(distribution.point_forecast, 31.0 / 3.0)

    def test_degenerate_pmf_interval(self) -> None:
        self.assertEqual(equal_tailed_interval(np.array([1.0]), 0.95), (0, 0))

    def test_bad_level_is_rejected(self) -> None:
        with self.assertRaises(ModelError):
            equal_tailed_interval(np.array([0.5, 0.5]), 1.0)


class LatentExtrapolationTest(unittest.TestCase):
    def test_next_point_uses_only_the_last_latent_value(self) -> None:
        # the exponential kernel is Markov on a line
        phi, sigmaw2 = 0.7, 0.4
        factor = build_correlation(TimeIndex([1.0, 2.0, 3.5]), phi)
        w = np.array([0.3, -0.8, 1.1])

        mean, variance = w_new_moments(factor, w, sigmaw2, 5.0)

        self.assertAlmostEqual(mean, math.exp(-1.5 * phi) * 1.1, places=10)
        self.assertAlmostEqual(variance, sigmaw2 * (1.0 - math.exp(-3.0 * phi)), places=10)

    def test_interior_point_is_allowed(self) -> None:
        factor = build_correlation(TimeIndex([1.0, 2.0, 3.0]), 1.0)

        _, variance = w_new_moments(factor, np.zeros(3), 1.0, 2.5)

        self.assertGreater(variance, 0.0)
        self.assertLess(variance, 1.0 - math.exp(-2.0))

    def test_far_point_reverts_to_the_prior(self) -> None:
        factor = build_correlation(TimeIndex([1.0, 2.0]), 1.0)

        mean, variance = w_new_moments(factor, np.array([2.0, 2.0]), 0.5, 100.0)

        self.assertAlmostEqual(mean, 0.0, places=12)
        self.assertAlmostEqual(variance, 0.5, places=12)

    def test_observed_time_is_rejected(self) -> None:
        factor = build_correlation(TimeIndex([1.0, 2.0]), 1.0)

        with self.assertRaises(ModelError) as ctx:
            w_new_moments(factor, np.zeros(2), 1.0, 2.0)

        self.assertEqual(ctx.exception.code, "INVALID_PARAMETER")


class PredictiveDistributionTest(unittest.TestCase):
    def setUp(self) -> None:
        self.series = _series()
        self.factor = build_correlation(self.series.index, 0.5)

    def test_pmf_is_valid(self) -> None:
        distribution = predictive_distribution(
            _samples(200), self.series, self.factor, np.array([1.0, 0.2]), 5.0, RngStream.create(1)
        )

        self.assertEqual(distribution.violations(), [])
        self.assertEqual(distribution.t_new, 5.0)
        self.assertAlmostEqual(distribution.mean(), distribution.point_forecast, delta=0.01 * distribution.mean())

    def test_tiny_variances_collapse_onto_the_linear_predictor(self) -> None:
        samples = _samples(50, sigma2=1e-10, sigmaw2=1e-10)
        x_new = np.array([1.0, 0.2])

        distribution = predictive_distribution(samples, self.series, self.factor, x_new, 5.0, RngStream.create(2))

        expected = np.mean(np.exp(samples.beta_matrix() @ x_new + samples.w_matrix()[:, -1] * math.exp(-0.5)))
        self.assertAlmostEqual(distribution.point_forecast, expected, places=3)

    def test_far_future_mean_follows_the_lognormal_identity(self) -> None:
        samples = _samples(4000)
        x_new = np.array([1.0, 0.2])

        distribution = predictive_distribution(samples, self.series, self.factor, x_new, 200.0, RngStream.create(4))

        total_variance = samples.sigma2_vector() + samples.sigmaw2_vector()
        per_draw = np.exp(samples.beta_matrix() @ x_new + 0.5 * total_variance)
        spread = per_draw * np.sqrt(np.expm1(total_variance))
        standard_error = float(np.sqrt(np.mean(spread**2 + (per_draw - per_draw.mean()) ** 2) / len(samples)))
        self.assertLess(abs(distribution.point_forecast - float(per_draw.mean())), 3.0 * standard_error)
        self.assertAlmostEqual(distribution.mean(), distribution.point_forecast, delta=0.01 * distribution.mean())

    def test_wrong_design_length_is_rejected(self) -> None:
        with self.assertRaises(ModelError) as ctx:
            predictive_distribution(_samples(5), self.series, self.factor, np.ones(3), 5.0, RngStream.create(3))

        self.assertEqual(ctx.exception.code, "DIMENSION_MISMATCH")

    def test_empty_posterior_is_rejected(self) -> None:
        empty = PosteriorSamples(draws=(), phi_used=0.5, burn_sweeps_used=0)

        with self.assertRaises(ModelError) as ctx:
            predictive_distribution(empty, self.series, self.factor, np.ones(2), 5.0, RngStream.create(3))

        self.assertEqual(ctx.exception.code, "EMPTY_POSTERIOR")


class ForecastHorizonTest(unittest.TestCase):
    def setUp(self) -> None:
        self.series = _series()
        self.factor = build_correlation(self.series.index, 0.5)
        self.x_future = np.array([[1.0, 0.0], [1.0, 0.5], [1.0, 1.0]])
        self.times = np.array([5.0, 6.0, 7.0])

    def test_thread_count_does_not_change_results(self) -> None:
        samples = _samples(100)
        serial = forecast_horizon(samples, self.series, self.factor, self.x_future, self.times, RngStream.create(4))
        threaded = forecast_horizon(
            samples, self.series, self.factor, self.x_future, self.times, RngStream.create(4), threads=3
        )

        for first, second in zip(serial, threaded):
            np.testing.assert_array_equal(first.pmf, second.pmf)
            self.assertEqual(first.interval, second.interval)

    def test_latent_uncertainty_grows_with_distance(self) -> None:
        samples = _samples(400, sigma2=1e-6, sigmaw2=0.5)
        x_future = np.tile([1.0, 0.0], (2, 1))

        times = np.array([4.1, 30.0])

        near, far = forecast_horizon(samples, self.series, self.factor, x_future, times, RngStream.create(5))

        self.assertLess(near.pmf.shape[0], far.pmf.shape[0])

    def test_times_must_follow_the_window(self) -> None:
        for times in (np.array([4.0, 5.0, 6.0]), np.array([5.0, 5.0, 6.0])):
            with self.subTest(times=times):
                with self.assertRaises(ModelError) as ctx:
                    forecast_horizon(_samples(5), self.series, self.factor, self.x_future, times, RngStream.create(6))
                self.assertEqual(ctx.exception.code, "VALIDATION_ERROR")

    def test_row_count_mismatch_is_rejected(self) -> None:
        with self.assertRaises(ModelError) as ctx:
            forecast_horizon(
                _samples(5), self.series, self.factor, self.x_future[:2], self.times, RngStream.create(7)
            )

        self.assertEqual(ctx.exception.code, "DIMENSION_MISMATCH")


if __name__ == "__main__":
    unittest.main()
