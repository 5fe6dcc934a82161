from __future__ import annotations

import json
import os
import tempfile
import unittest
from pathlib import Path
from unittest.mock import patch

from poisson_expcov.orchestration.options_builder import (
    build_config_values_from_env,
    build_model_config,
    load_config_file,
    parse_float_csv,
)
from poisson_expcov.shared.errors import ModelError
from poisson_expcov.shared.interfaces import DEFAULT_PHI_GRID


class OptionsBuilderTest(unittest.TestCase):
    def setUp(self) -> None:
        self._tmp = tempfile.TemporaryDirectory()
        self.tmp = Path(self._tmp.name)

    def tearDown(self) -> None:
        self._tmp.cleanup()

    def _config_file(self, payload: object) -> Path:
        path = self.tmp / "config.json"
        path.write_text(json.dumps(payload), encoding="utf-8")
        return path

    def test_defaults_without_env(self) -> None:
        with patch.dict(os.environ, {}, clear=True):
            config = build_model_config()

        self.assertEqual(config.phi, 0.25)
        self.assertEqual(config.phi_grid, DEFAULT_PHI_GRID)
        self.assertEqual(config.thin, 20)

    def test_override_beats_file_beats_env(self) -> None:
        path = self._config_file({"phi": 1.0, "thin": 15, "seed": 3})
        env = {"POISSON_EXPCOV_PHI": "0.5", "POISSON_EXPCOV_THIN": "30", "POISSON_EXPCOV_N_CHAINS": "3"}

        with patch.dict(os.environ, env, clear=True):
            config = build_model_config(config_path=path, overrides={"phi": 1.5, "seed": None})

        self.assertEqual(config.phi, 1.5)
        self.assertEqual(config.thin, 15)
        self.assertEqual(config.seed, 3)
        self.assertEqual(config.n_chains, 3)

    def test_env_aliases_and_grid(self) -> None:
        env = {"POISSON_EXPCOV_CHAINS": "6", "POISSON_EXPCOV_SAMPLES": "250", "POISSON_EXPCOV_PHI_GRID": "0.1, 2"}

        with patch.dict(os.environ, env, clear=True):
            values = build_config_values_from_env()

        self.assertEqual(values["n_chains"], 6)
        self.assertEqual(values["posterior_size"], 250)
        self.assertEqual(values["phi_grid"], (0.1, 2.0))

    def test_unparseable_env_falls_back_to_default(self) -> None:
        with patch.dict(os.environ, {"POISSON_EXPCOV_THIN": "many", "POISSON_EXPCOV_PHI": " "}, clear=True):
            values = build_config_values_from_env()

        self.assertEqual(values["thin"], 20)
        self.assertEqual(values["phi"], 0.25)

    def test_grid_in_json_accepts_list_or_string(self) -> None:
        self.assertEqual(load_config_file(self._config_file({"phi_grid": [0.5, 1]}))["phi_grid"], (0.5, 1.0))
        self.assertEqual(load_config_file(self._config_file({"phi_grid": "0.5,1"}))["phi_grid"], (0.5, 1.0))

    def test_bad_config_files_are_validation_errors(self) -> None:
        cases = [{"phi": 1.0, "colour": "red"}, {"thin": 12.5}, {"loglik_mode": 3}, [1, 2], {"phi_grid": []}]
        for payload in cases:
            with self.subTest(payload=payload):
                with self.assertRaises(ModelError) as ctx:
                    load_config_file(self._config_file(payload))
                self.assertEqual(ctx.exception.exit_status, 2)

    def test_invalid_json_and_missing_file(self) -> None:
        broken = self.tmp / "broken.json"
        broken.write_text("{phi: 1", encoding="utf-8")

        with self.assertRaises(ModelError) as invalid:
            load_config_file(broken)
        with self.assertRaises(ModelError) as missing:
            load_config_file(self.tmp / "absent.json")

        self.assertEqual(invalid.exception.code, "VALIDATION_ERROR")
        self.assertEqual(missing.exception.code, "IO_ERROR")
        self.assertEqual(missing.exception.exit_status, 4)

    def test_resolved_config_is_validated(self) -> None:
        with patch.dict(os.environ, {}, clear=True):
            with self.assertRaises(ModelError) as ctx:
                build_model_config(overrides={"thin": 5, "n_chains": 1})

        self.assertEqual(ctx.exception.code, "VALIDATION_ERROR")
        self.assertEqual(len(ctx.exception.details["violations"]), 2)

    def test_unknown_override_is_rejected(self) -> None:
        with self.assertRaises(ModelError):
            build_model_config(overrides={"temperature": 1.0})

    def test_parse_float_csv_skips_blanks(self) -> None:
        self.assertEqual(parse_float_csv("0.01, ,3"), (0.01, 3.0))
        with self.assertRaises(ValueError):
            parse_float_csv("0.1,abc")


if __name__ == "__main__":
    unittest.main()
