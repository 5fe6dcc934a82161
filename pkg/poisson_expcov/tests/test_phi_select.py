from __future__ import annotations

import unittest
from dataclasses import replace
from unittest.mock import patch

import numpy as np

from poisson_expcov.evaluation.scoring import ScoreReport
from poisson_expcov.inference.gibbs import run_sampler
from poisson_expcov.inference.phi_select import CvPlan, CvResult, CvRow, select_phi
from poisson_expcov.shared.errors import ModelError
from poisson_expcov.shared.series import ObservedSeries
from poisson_expcov.tests.oracles import fast_config, synthetic_series


def _report(rps: float, brier: float = -0.2) -> ScoreReport:
    return ScoreReport(brier=brier, spherical=-0.4, rps=rps, n_points=4, rmse=1.0)


class SelectPhiTest(unittest.TestCase):
    def setUp(self) -> None:
        self.series = synthetic_series(40)
        self.config = fast_config()

    def test_small_grid_end_to_end(self) -> None:
        result = select_phi(self.series, self.config, CvPlan(grid=(0.25, 1.0)))

        self.assertEqual(result.n_train, 36)
        self.assertEqual([row.phi for row in result.rows], [0.25, 1.0])
        self.assertTrue(all(row.ok for row in result.rows))
        best = min(result.rows, key=lambda row: (row.report.rps, row.phi))
        self.assertEqual(result.phi_opt, best.phi)
        self.assertEqual(result.rows[0].as_row()["status"], "ok")

    def test_threads_do_not_change_the_table(self) -> None:
        plan = CvPlan(grid=(0.25, 1.0))

        serial = select_phi(self.series, self.config, plan)
        threaded = select_phi(self.series, replace(self.config, threads=2), plan)

        self.assertEqual([row.as_row() for row in serial.rows], [row.as_row() for row in threaded.rows])

    def test_ties_go_to_the_smaller_phi(self) -> None:
        def scored(train, valid, config, phi):
            return CvRow(phi=phi, report=_report(0.3))

        with patch("poisson_expcov.inference.phi_select._score_phi", side_effect=scored):
            result = select_phi(self.series, self.config, CvPlan(grid=(1.5, 0.5, 3.0)))

        self.assertEqual(result.phi_opt, 0.5)

    def test_criterion_picks_the_column(self) -> None:
        reports = {0.5: _report(rps=0.2, brier=-0.1), 1.0: _report(rps=0.3, brier=-0.3)}

        def scored(train, valid, config, phi):
            return CvRow(phi=phi, report=reports[phi])

        with patch("poisson_expcov.inference.phi_select._score_phi", side_effect=scored):
            by_rps = select_phi(self.series, self.config, CvPlan(grid=(0.5, 1.0)))
            by_brier = select_phi(self.series, self.config, CvPlan(grid=(0.5, 1.0), criterion="brier"))

        self.assertEqual(by_rps.phi_opt, 0.5)
        self.assertEqual(by_brier.phi_opt, 1.0)

    def test_failed_phi_is_skipped(self) -> None:
        def scored(train, valid, config, phi):
            if phi == 0.5:
                return CvRow(phi=phi, report=None, error="CONVERGENCE_FAILURE: stuck")
            return CvRow(phi=phi, report=_report(0.9))

        with patch("poisson_expcov.inference.phi_select._score_phi", side_effect=scored):
            result = select_phi(self.series, self.config, CvPlan(grid=(0.5, 1.0)))

        self.assertEqual(result.phi_opt, 1.0)
        self.assertEqual(result.rows[0].as_row()["status"], "failed")

    def test_every_phi_failing_is_a_convergence_failure(self) -> None:
        def scored(train, valid, config, phi):
            return CvRow(phi=phi, report=None, error="stuck")

        with patch("poisson_expcov.inference.phi_select._score_phi", side_effect=scored):
            with self.assertRaises(ModelError) as ctx:
                select_phi(self.series, self.config, CvPlan(grid=(0.5, 1.0)))

        self.assertEqual(ctx.exception.code, "CONVERGENCE_FAILURE")

    def test_validation_counts_never_reach_the_training_fits(self) -> None:
        tail_shifted = ObservedSeries(
            index=self.series.index,
            counts=np.concatenate([self.series.counts[:36], self.series.counts[36:] + 7]),
            design=self.series.design,
            covariate_names=self.series.covariate_names,
        )

        def recorded_runs(series: ObservedSeries) -> tuple[dict[float, np.ndarray], CvResult]:
            draws: dict[float, np.ndarray] = {}

            def sampler(train, config, factor, **kwargs):
                samples = run_sampler(train, config, factor, **kwargs)
                draws[config.phi] = samples.mu_matrix()
                return samples

            with patch("poisson_expcov.inference.phi_select.run_sampler", side_effect=sampler):
                result = select_phi(series, self.config, CvPlan(grid=(0.25, 1.0)))
            return draws, result

        original_draws, original = recorded_runs(self.series)
        shifted_draws, shifted = recorded_runs(tail_shifted)

        self.assertEqual(sorted(original_draws), [0.25, 1.0])
        for phi, mu in original_draws.items():
            with self.subTest(phi=phi):
                self.assertEqual(mu.shape[1], 36)
                np.testing.assert_array_equal(shifted_draws[phi], mu)
        self.assertNotEqual(original.rows[0].report.rps, shifted.rows[0].report.rps)

    def test_short_series_is_insufficient(self) -> None:
        with self.assertRaises(ModelError) as ctx:
            select_phi(synthetic_series(15), self.config, CvPlan(grid=(0.5,)))

        self.assertEqual(ctx.exception.code, "INSUFFICIENT_DATA")

    def test_bad_plans_are_rejected(self) -> None:
        for plan in (CvPlan(grid=()), CvPlan(grid=(0.5,), criterion="crps"), CvPlan(grid=(0.5,), train_fraction=1.0)):
            with self.subTest(plan=plan):
                with self.assertRaises(ModelError) as ctx:
                    select_phi(self.series, self.config, plan)
                self.assertEqual(ctx.exception.code, "VALIDATION_ERROR")


if __name__ == "__main__":
    unittest.main()
