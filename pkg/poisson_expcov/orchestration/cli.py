#!/usr/bin/env python3
from __future__ import annotations

import argparse
import json
import logging
import sys
import uuid
from pathlib import Path
from typing import Any

from poisson_expcov.inference.phi_select import CRITERIA
from poisson_expcov.shared.dotenv import auto_load_dotenv
from poisson_expcov.shared.errors import ModelError, internal_error, io_error, validation_error
from poisson_expcov.shared.interfaces import ModelConfig
from poisson_expcov.shared.log_context import bind_context
from poisson_expcov.shared.logging_config import configure_logging
from poisson_expcov.simulation.dgp import DGP_IDS, DgpSpec
from poisson_expcov.simulation.study import MODELS, PHI_STRATEGIES

from .csv_io import IngestOptions
from .options_builder import build_model_config, parse_float_csv
from .pipeline_service import run_cv, run_fit, run_forecast, run_score, run_simulate

COMMANDS = ("fit", "cv", "forecast", "simulate", "score")


def _add_config_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", type=Path, default=None, help="JSON file of model config fields")
    parser.add_argument("--seed", type=int, default=None)
    parser.add_argument("--phi", type=float, default=None, help="Correlation decay of the latent process")
    parser.add_argument("--phi-grid", type=str, default=None, help='Comma separated grid, e.g. "0.01,0.1,0.25"')
    parser.add_argument("--chains", type=int, default=None)
    parser.add_argument("--thin", type=int, default=None)
    parser.add_argument("--samples", type=int, default=None, help="Retained posterior draws")
    parser.add_argument("--threads", type=int, default=None, help="Worker pool size (default: cpu count)")
    parser.add_argument("--out-dir", type=Path, default=Path("out"))
    parser.add_argument("--log-level", type=str, default=None)


def _add_data_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--data", type=Path, required=True, help="CSV with time, y and covariate columns")
    parser.add_argument(
        "--no-intercept",
        action="store_true",
        default=False,
        help="Do not prepend an intercept column",
    )
    parser.add_argument("--trend", action="store_true", default=False, help="Add a linear trend column 1..T")
    parser.add_argument(
        "--season-col",
        type=str,
        default=None,
        help="Categorical column expanded to indicators; the last level is the reference",
    )


def parse_args(argv: list[str] | None = None) -> argparse.Namespace:
    parser = argparse.ArgumentParser(
        prog="poisson_expcov",
        description="Poisson count time series with a latent exponential-covariance process.",
    )
    commands = parser.add_subparsers(dest="command", required=True)

    fit = commands.add_parser("fit", help="Sample the posterior and write draws, metrics and summaries")
    _add_config_flags(fit)
    _add_data_flags(fit)

    cv = commands.add_parser("cv", help="Pick phi from a grid by forecast scores on a held-out tail")
    _add_config_flags(cv)
    _add_data_flags(cv)
    cv.add_argument("--criterion", choices=CRITERIA, default="rps")

    forecast = commands.add_parser("forecast", help="Predictive distributions for future time points")
    _add_config_flags(forecast)
    _add_data_flags(forecast)
    forecast.add_argument("--future", type=Path, default=None, help="CSV of future times and covariates")
    forecast.add_argument("--horizon", type=int, default=None, help="Steps ahead when there are no covariates")
    forecast.add_argument("--draws", type=Path, default=None, help="draws.csv written by fit")

    simulate = commands.add_parser("simulate", help="Repeated simulate/fit/forecast study")
    _add_config_flags(simulate)
    simulate.add_argument("--dgp", type=int, choices=DGP_IDS, required=True)
    simulate.add_argument("--reps", type=int, default=50)
    simulate.add_argument("--n-obs", type=int, default=100)
    simulate.add_argument("--models", type=str, default=",".join(MODELS))
    simulate.add_argument("--phi-strategy", choices=PHI_STRATEGIES, default="fixed")
    simulate.add_argument("--noise-scale", type=float, default=1.0)

    score = commands.add_parser("score", help="Score a forecast file against realized counts")
    _add_config_flags(score)
    score.add_argument("--forecast", type=Path, required=True, help="forecast_pmf.csv written by forecast")
    score.add_argument("--truth", type=Path, required=True, help="CSV with time and y columns")

    return parser.parse_args(argv)


def _config_overrides(args: argparse.Namespace) -> dict[str, Any]:
    phi_grid = None
    if args.phi_grid is not None:
        try:
            phi_grid = parse_float_csv(args.phi_grid)
        except ValueError as exc:
            raise validation_error(f"--phi-grid: {exc}") from exc
    return {
        "seed": args.seed,
        "phi": args.phi,
        "phi_grid": phi_grid,
        "n_chains": args.chains,
        "thin": args.thin,
        "posterior_size": args.samples,
        "threads": args.threads,
    }


def build_cli_config(args: argparse.Namespace) -> ModelConfig:
    return build_model_config(config_path=args.config, overrides=_config_overrides(args))


def _ingest_options(args: argparse.Namespace) -> IngestOptions:
    return IngestOptions(intercept=not args.no_intercept, trend=args.trend, season_col=args.season_col)


def _run_command(args: argparse.Namespace, config: ModelConfig) -> dict[str, Any]:
    if args.command == "fit":
        return run_fit(args.data, config, _ingest_options(args), args.out_dir).to_payload()
    if args.command == "cv":
        return run_cv(args.data, config, _ingest_options(args), args.out_dir, criterion=args.criterion).to_payload()
    if args.command == "forecast":
        return run_forecast(
            args.data,
            config,
            _ingest_options(args),
            args.out_dir,
            future_path=args.future,
            horizon=args.horizon,
            draws_path=args.draws,
        ).to_payload()
    if args.command == "simulate":
        models = tuple(item.strip() for item in args.models.split(",") if item.strip())
        spec = DgpSpec(dgp_id=args.dgp, n_obs=args.n_obs, noise_scale=args.noise_scale)
        return run_simulate(
            spec,
            args.reps,
            config,
            args.out_dir,
            models=models,
            phi_strategy=args.phi_strategy,
        ).to_payload()
    return run_score(args.forecast, args.truth, args.out_dir, config).to_payload()


def _emit_error(error: ModelError) -> int:
    sys.stderr.write(json.dumps(error.to_record(), ensure_ascii=False, default=str) + "\n")
    return error.exit_status


def main(argv: list[str] | None = None) -> int:
    args = parse_args(argv)
    auto_load_dotenv()
    configure_logging(level=args.log_level)
    run_id = uuid.uuid4().hex
    with bind_context(run_id=run_id, command=args.command):
        try:
            config = build_cli_config(args)
            payload = _run_command(args, config)
        except ModelError as exc:
            logging.error("%s failed: %s", args.command, exc)
            return _emit_error(exc)
        except OSError as exc:
            logging.error("%s failed: %s", args.command, exc)
            return _emit_error(io_error(str(exc)))
        except Exception as exc:
            logging.exception("%s failed unexpectedly", args.command)
            return _emit_error(internal_error(str(exc) or type(exc).__name__, exception=type(exc).__name__))
    sys.stdout.write(json.dumps({"command": args.command, "run_id": run_id, **payload}, default=str) + "\n")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
