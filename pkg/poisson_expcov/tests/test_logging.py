from __future__ import annotations

import contextvars
import io
import json
import logging
import os
import tempfile
import unittest
from pathlib import Path
from unittest.mock import patch

import numpy as np

from poisson_expcov.shared.dotenv import DOTENV_PATH_ENV, auto_load_dotenv, default_dotenv_candidates
from poisson_expcov.shared.log_context import bind_context, get_all_context_fields, get_run_id
from poisson_expcov.shared.logging_config import _JsonFormatter, _TextFormatter, configure_logging


def _record(message: str, *args: object) -> logging.LogRecord:
    return logging.LogRecord(
        name="poisson_expcov.test",
        level=logging.INFO,
        pathname=__file__,
        lineno=1,
        msg=message,
        args=args,
        exc_info=None,
    )


class LogContextTest(unittest.TestCase):
    def test_bind_context_nests_and_resets(self) -> None:
        with bind_context(run_id="abc", command="fit"):
            with bind_context(phi=0.25, chain_id=None):
                self.assertEqual(get_all_context_fields(), {"run_id": "abc", "command": "fit", "phi": "0.25"})
            self.assertEqual(get_run_id(), "abc")
            self.assertNotIn("phi", get_all_context_fields())
        self.assertEqual(get_all_context_fields(), {})

    def test_copied_context_carries_fields_into_workers(self) -> None:
        with bind_context(replication=4):
            snapshot = contextvars.copy_context()

        self.assertEqual(snapshot.run(get_all_context_fields), {"replication": "4"})
        self.assertEqual(get_all_context_fields(), {})


class FormatterTest(unittest.TestCase):
    def test_json_lines_carry_context(self) -> None:
        with bind_context(run_id="r1", chain_id=2):
            line = _JsonFormatter().format(_record("gelman-rubin check: sweep=%s", 100))

        payload = json.loads(line)
        self.assertEqual(payload["message"], "gelman-rubin check: sweep=100")
        self.assertEqual(payload["level"], "INFO")
        self.assertEqual(payload["run_id"], "r1")
        self.assertEqual(payload["chain_id"], "2")

    def test_numpy_extras_are_serialised(self) -> None:
        record = _record("fit summary")
        record.rhat = np.float64(1.02)
        record.beta = np.array([0.5, -0.25])

        payload = json.loads(_JsonFormatter().format(record))

        self.assertEqual(payload["rhat"], 1.02)
        self.assertEqual(payload["beta"], [0.5, -0.25])

    def test_text_lines_show_context_in_brackets(self) -> None:
        with bind_context(command="cv"):
            line = _TextFormatter().format(_record("cv selected phi=%s", 0.5))

        self.assertIn("[command=cv]", line)
        self.assertTrue(line.endswith("cv selected phi=0.5"))

    def test_configure_logging_writes_to_stderr_only(self) -> None:
        stderr = io.StringIO()
        root = logging.getLogger()
        package = logging.getLogger("poisson_expcov")
        saved_handlers, saved_level, saved_package_level = root.handlers[:], root.level, package.level
        try:
            with patch("sys.stderr", stderr):
                configure_logging(level="warning", format_type="json")
                logging.getLogger("poisson_expcov.test").info("hidden")
                logging.getLogger("poisson_expcov.test").warning("shown")
        finally:
            root.handlers[:] = saved_handlers
            root.setLevel(saved_level)
            package.setLevel(saved_package_level)

        lines = [json.loads(line) for line in stderr.getvalue().splitlines()]
        self.assertEqual([line["message"] for line in lines], ["shown"])


class DotenvTest(unittest.TestCase):
    def test_first_existing_file_is_loaded_without_override(self) -> None:
        with tempfile.TemporaryDirectory() as tmp:
            env_file = Path(tmp) / ".env"
            env_file.write_text("POISSON_EXPCOV_SEED=11\nPOISSON_EXPCOV_PHI=3.0\n", encoding="utf-8")
            with patch.dict(os.environ, {"POISSON_EXPCOV_PHI": "0.5"}, clear=True):
                loaded = auto_load_dotenv([Path(tmp) / "missing.env", env_file])
                seed, phi = os.environ.get("POISSON_EXPCOV_SEED"), os.environ.get("POISSON_EXPCOV_PHI")

        self.assertEqual(loaded, env_file)
        self.assertEqual(seed, "11")
        self.assertEqual(phi, "0.5")

    def test_explicit_path_variable_comes_first(self) -> None:
        with tempfile.TemporaryDirectory() as tmp:
            env_file = Path(tmp) / "run.env"
            env_file.write_text("POISSON_EXPCOV_CHAINS=2\n", encoding="utf-8")
            with patch.dict(os.environ, {DOTENV_PATH_ENV: str(env_file)}, clear=True):
                candidates = default_dotenv_candidates()
                loaded = auto_load_dotenv()
                chains = os.environ.get("POISSON_EXPCOV_CHAINS")

        self.assertEqual(candidates[0], env_file)
        self.assertEqual(loaded, env_file)
        self.assertEqual(chains, "2")

    def test_no_candidates_returns_none(self) -> None:
        self.assertIsNone(auto_load_dotenv([]))


if __name__ == "__main__":
    unittest.main()
