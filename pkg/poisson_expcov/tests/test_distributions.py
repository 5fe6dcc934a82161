from __future__ import annotations

import unittest

import numpy as np
from scipy import stats

from poisson_expcov.sampling.distributions import (
    InnovationSpec,
    is_stationary,
    sample_inverse_gamma,
    sample_mvn,
    sample_poisson,
    sample_student_t,
    simulate_ar,
)
from poisson_expcov.sampling.rng import RngStream
from poisson_expcov.shared.errors import ModelError
from poisson_expcov.tests.oracles import yule_walker_autocovariance


class RngStreamTest(unittest.TestCase):
    def test_same_id_gives_same_draws(self) -> None:
        first = RngStream.create(11, "chain", 0).standard_normal(5)
        second = RngStream.create(11, "chain", 0).standard_normal(5)

        np.testing.assert_array_equal(first, second)

    def test_different_ids_give_different_draws(self) -> None:
        first = RngStream.create(11, "chain", 0).standard_normal(5)
        second = RngStream.create(11, "chain", 1).standard_normal(5)

        self.assertFalse(np.array_equal(first, second))

    def test_child_matches_direct_creation(self) -> None:
        child = RngStream.create(5, "rep").child(3, "data")
        direct = RngStream.create(5, "rep", 3, "data")

        self.assertEqual(child.stream_id, ("rep", 3, "data"))
        np.testing.assert_array_equal(child.uniform(4), direct.uniform(4))

    def test_negative_seed_is_rejected(self) -> None:
        with self.assertRaises(ModelError):
            RngStream.create(-1)


class InverseGammaTest(unittest.TestCase):
    def test_moments_match_closed_form(self) -> None:
        shape, scale = 6.0, 2.5
        draws = sample_inverse_gamma(RngStream.create(1, "ig"), shape, scale, size=100_000)
        mean = scale / (shape - 1.0)
        variance = scale**2 / ((shape - 1.0) ** 2 * (shape - 2.0))

        self.assertLess(abs(draws.mean() - mean), 4.0 * np.sqrt(variance / draws.size))
        self.assertLess(abs(draws.var() / variance - 1.0), 0.07)

    def test_distribution_matches_scipy(self) -> None:
        draws = sample_inverse_gamma(RngStream.create(2, "ig"), 3.0, 1.0, size=20_000)

        statistic = stats.kstest(draws, stats.invgamma(a=3.0, scale=1.0).cdf).statistic

        self.assertLess(statistic, 0.015)

    def test_scalar_draw_is_float(self) -> None:
        self.assertIsInstance(sample_inverse_gamma(RngStream.create(3), 3.0, 1.0), float)

    def test_bad_parameters_are_rejected(self) -> None:
        for shape, scale in ((0.0, 1.0), (3.0, 0.0), (float("inf"), 1.0)):
            with self.subTest(shape=shape, scale=scale):
                with self.assertRaises(ModelError) as ctx:
                    sample_inverse_gamma(RngStream.create(3), shape, scale)
                self.assertEqual(ctx.exception.code, "INVALID_PARAMETER")


class MultivariateNormalTest(unittest.TestCase):
    def test_covariance_is_recovered(self) -> None:
        covariance = np.array([[2.0, 0.6], [0.6, 0.5]])
        chol = np.linalg.cholesky(covariance)
        rng = RngStream.create(4, "mvn")

        draws = np.array([sample_mvn(rng, [1.0, -1.0], chol) for _ in range(40_000)])

        np.testing.assert_allclose(draws.mean(axis=0), [1.0, -1.0], atol=0.03)
        np.testing.assert_allclose(np.cov(draws.T), covariance, atol=0.06)

    def test_shape_mismatch_is_rejected(self) -> None:
        with self.assertRaises(ModelError) as ctx:
            sample_mvn(RngStream.create(4), np.zeros(3), np.eye(2))

        self.assertEqual(ctx.exception.code, "DIMENSION_MISMATCH")


class PoissonAndStudentTest(unittest.TestCase):
    def test_zero_rate_gives_zero(self) -> None:
        self.assertEqual(sample_poisson(RngStream.create(5), 0.0), 0)

    def test_vector_rates_give_int_array(self) -> None:
        draws = sample_poisson(RngStream.create(5), np.array([1.0, 2.0, 3.0]))

        self.assertEqual(draws.dtype, np.int64)
        self.assertEqual(draws.shape, (3,))

    def test_negative_rate_is_rejected(self) -> None:
        with self.assertRaises(ModelError):
            sample_poisson(RngStream.create(5), -1.0)

    def test_student_t_variance(self) -> None:
        draws = sample_student_t(RngStream.create(6, "t"), 5.0, 200_000)

        self.assertLess(abs(draws.var() - 5.0 / 3.0), 0.08)
        self.assertAlmostEqual(InnovationSpec("student_t", 1.0, 5.0).variance(), 5.0 / 3.0)

    def test_unknown_innovation_law_is_rejected(self) -> None:
        with self.assertRaises(ModelError):
            InnovationSpec("laplace").draw(RngStream.create(6), 3)


class AutoregressionTest(unittest.TestCase):
    def test_stationarity_check(self) -> None:
        self.assertTrue(is_stationary([0.2, -0.3, 0.1]))
        self.assertTrue(is_stationary([0.5]))
        self.assertFalse(is_stationary([1.0]))
        self.assertFalse(is_stationary([0.6, 0.5]))

    def test_non_stationary_coefficients_are_rejected(self) -> None:
        with self.assertRaises(ModelError) as ctx:
            simulate_ar(RngStream.create(7), [1.2], InnovationSpec(), 10)

        self.assertEqual(ctx.exception.code, "NON_STATIONARY_COEFFICIENTS")

    def test_ar3_autocovariance_matches_yule_walker(self) -> None:
        coeffs = (0.2, -0.3, 0.1)
        path = simulate_ar(RngStream.create(8, "ar"), coeffs, InnovationSpec(), 200_000)
        expected = yule_walker_autocovariance(coeffs, 3)
        centred = path - path.mean()
        observed = [float(centred[lag:] @ centred[: centred.size - lag]) / centred.size for lag in range(4)]

        np.testing.assert_allclose(observed, expected, atol=0.02)

    def test_ar1_variance(self) -> None:
        path = simulate_ar(RngStream.create(9, "ar"), (0.5,), InnovationSpec(), 100_000)

        self.assertLess(abs(path.var() - 1.0 / 0.75), 0.04)

    def test_path_length_and_determinism(self) -> None:
        first = simulate_ar(RngStream.create(10), (0.5,), InnovationSpec(), 25)
        second = simulate_ar(RngStream.create(10), (0.5,), InnovationSpec(), 25)

        self.assertEqual(first.shape, (25,))
        np.testing.assert_array_equal(first, second)


if __name__ == "__main__":
    unittest.main()
