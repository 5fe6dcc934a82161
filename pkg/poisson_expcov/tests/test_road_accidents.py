"""End-to-end run on the UK seat-belt casualty series (van drivers killed, 1969-1984).

The CSVs come from ``scripts/export_seatbelts.sh``; the test is skipped when
they are absent or slow tests are off.
"""

from __future__ import annotations

import os
import tempfile
import unittest
from dataclasses import replace
from pathlib import Path

from poisson_expcov.orchestration.csv_io import IngestOptions
from poisson_expcov.orchestration.pipeline_service import run_cv, run_fit, run_forecast
from poisson_expcov.shared.dotenv import REPO_ROOT
from poisson_expcov.shared.interfaces import ModelConfig
from poisson_expcov.tests.oracles import SLOW_TESTS

SEATBELTS_DIR = Path(os.environ.get("POISSON_EXPCOV_SEATBELTS_DIR", REPO_ROOT / "test_data" / "seatbelts"))
TRAIN = SEATBELTS_DIR / "train.csv"
FUTURE = SEATBELTS_DIR / "future.csv"


@unittest.skipUnless(SLOW_TESTS, "set POISSON_EXPCOV_SLOW_TESTS=1")
@unittest.skipUnless(TRAIN.is_file() and FUTURE.is_file(), "run scripts/export_seatbelts.sh first")
class RoadAccidentRunTest(unittest.TestCase):
    @classmethod
    def setUpClass(cls) -> None:
        cls._tmp = tempfile.TemporaryDirectory()
        out = Path(cls._tmp.name)
        ingest = IngestOptions(trend=True, season_col="month")
        config = replace(ModelConfig(), max_burn_sweeps=5000)

        cls.cv = run_cv(TRAIN, config, ingest, out / "cv")
        fit_config = replace(config, phi=cls.cv.phi_opt)
        cls.fit = run_fit(TRAIN, fit_config, ingest, out / "fit")
        cls.forecast = run_forecast(
            TRAIN, fit_config, ingest, out / "forecast", future_path=FUTURE, draws_path=cls.fit.draws_path
        )

    @classmethod
    def tearDownClass(cls) -> None:
        cls._tmp.cleanup()

    def test_cross_validation_picks_quarter(self) -> None:
        self.assertEqual(self.cv.phi_opt, 0.25)

    def test_in_sample_fit_quality(self) -> None:
        self.assertGreaterEqual(self.fit.metrics["r2"], 0.6)
        self.assertLessEqual(self.fit.metrics["rmse"], 2.5)

    def test_burn_in_converges_within_5000_sweeps(self) -> None:
        samples = self.fit.samples

        self.assertLessEqual(samples.burn_sweeps_used, 5000)
        self.assertLess(samples.gr_history[-1][1], 1.5)

    def test_variance_components_are_small(self) -> None:
        for name in ("sigma2_hat", "sigmaw2_hat"):
            with self.subTest(component=name):
                self.assertGreater(self.fit.metrics[name], 0.005)
                self.assertLess(self.fit.metrics[name], 0.15)

    def test_year_ahead_scores(self) -> None:
        scores = self.forecast.scores

        self.assertIsNotNone(scores)
        self.assertEqual(scores["n_points"], 12)
        self.assertGreaterEqual(scores["brier"], -0.25)
        self.assertLessEqual(scores["brier"], -0.10)
        self.assertGreaterEqual(scores["spherical"], -0.50)
        self.assertLessEqual(scores["spherical"], -0.30)


if __name__ == "__main__":
    unittest.main()
