from __future__ import annotations

import contextvars
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace

import numpy as np

from ..evaluation.scoring import ScoreReport, score_horizon
from ..prediction.forecast import forecast_horizon
from ..sampling.rng import RngStream
from ..shared.errors import ModelError, convergence_failure, insufficient_data, validation_error
from ..shared.interfaces import ModelConfig
from ..shared.log_context import bind_context
from ..shared.series import ObservedSeries
from .covariance import build_correlation
from .gibbs import run_sampler

CRITERIA = ("rps", "brier", "spherical", "rmse")
MIN_TRAIN_POINTS = 20


@dataclass(frozen=True)
class CvPlan:
    grid: tuple[float, ...]
    train_fraction: float = 0.9
    criterion: str = "rps"

    def violations(self) -> list[str]:
        problems: list[str] = []
        if not self.grid:
            problems.append("phi grid must not be empty")
        elif any(not phi > 0 for phi in self.grid):
            problems.append("phi grid values must be > 0")
        if not 0.0 < self.train_fraction < 1.0:
            problems.append(f"train_fraction must be in (0, 1), got {self.train_fraction}")
        if self.criterion not in CRITERIA:
            problems.append(f"criterion must be one of {CRITERIA}, got {self.criterion!r}")
        return problems

    def n_train(self, n_obs: int) -> int:
        return int(math.floor(self.train_fraction * n_obs + 0.5))


@dataclass(frozen=True)
class CvRow:
    phi: float
    report: ScoreReport | None
    burn_sweeps: int = 0
    error: str = ""

    @property
    def ok(self) -> bool:
        return self.report is not None

    def as_row(self) -> dict[str, object]:
        scores = self.report.as_dict() if self.report is not None else {name: float("nan") for name in CRITERIA}
        return {
            "phi": self.phi,
            "brier": scores["brier"],
            "spherical": scores["spherical"],
            "rps": scores["rps"],
            "rmse": scores["rmse"],
            "burn_sweeps": self.burn_sweeps,
            "status": "ok" if self.ok else "failed",
            "error": self.error,
        }


@dataclass(frozen=True)
class CvResult:
    phi_opt: float
    rows: tuple[CvRow, ...]
    criterion: str
    n_train: int


def _score_phi(train: ObservedSeries, valid: ObservedSeries, config: ModelConfig, phi: float) -> CvRow:
    phi_config = replace(config, phi=phi, threads=1)
    with bind_context(phi=phi):
        try:
            factor = build_correlation(train.index, phi)
            samples = run_sampler(train, phi_config, factor, stream_tag=("cv", repr(phi)))
            forecasts = forecast_horizon(
                samples,
                train,
                factor,
                valid.design,
                valid.times,
                RngStream.create(config.seed, "cv-forecast", repr(phi)),
                level=config.interval_level,
                tail_mass=config.tail_mass,
            )
            report = score_horizon(forecasts, valid.counts)
        except ModelError as exc:
            logging.warning("phi excluded from cross-validation: %s", exc)
            return CvRow(phi=phi, report=None, error=str(exc))
        logging.info(
            "cv row: rps=%.5f brier=%.5f spherical=%.5f rmse=%.4f",
            report.rps,
            report.brier,
            report.spherical,
            report.rmse,
        )
        return CvRow(phi=phi, report=report, burn_sweeps=samples.burn_sweeps_used)


def select_phi(series: ObservedSeries, config: ModelConfig, plan: CvPlan) -> CvResult:
    """Grid search for phi on a chronological train/validation split.

    Every phi is fitted on the leading ``train_fraction`` of the series and
    scored on forecasts of the tail. Failed phi values are kept in the table
    and skipped by the argmin; ties go to the smaller phi.
    """
    problems = plan.violations()
    if problems:
        raise validation_error("invalid cv plan: " + "; ".join(problems), violations=problems)
    config.require_valid()
    n_train = plan.n_train(series.n_obs)
    needed = max(3 * series.n_coef, MIN_TRAIN_POINTS)
    if n_train < needed or n_train >= series.n_obs:
        raise insufficient_data(
            f"cv train segment has {n_train} of {series.n_obs} points; need >= {needed} and a non-empty tail"
        )
    train, valid = series.split(n_train)
    grid = tuple(float(phi) for phi in plan.grid)

    workers = max(1, min(config.threads, len(grid)))
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            futures = [
                pool.submit(contextvars.copy_context().run, _score_phi, train, valid, config, phi) for phi in grid
            ]
            rows = tuple(future.result() for future in futures)
    else:
        rows = tuple(_score_phi(train, valid, config, phi) for phi in grid)

    scored = [(row.report.criterion(plan.criterion), row.phi) for row in rows if row.report is not None]
    scored = [(value, phi) for value, phi in scored if np.isfinite(value)]
    if not scored:
        raise convergence_failure(
            "every phi in the grid failed during cross-validation",
            failures={repr(row.phi): row.error for row in rows},
        )
    best_value, phi_opt = min(scored)
    logging.info("cv selected phi=%s %s=%.5f", phi_opt, plan.criterion, best_value)
    return CvResult(phi_opt=phi_opt, rows=rows, criterion=plan.criterion, n_train=n_train)
