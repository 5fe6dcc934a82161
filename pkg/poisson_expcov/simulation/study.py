from __future__ import annotations

import contextvars
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Iterable, Sequence

import numpy as np

from ..evaluation.scoring import ScoreReport, score_horizon
from ..inference.covariance import build_correlation
from ..inference.gibbs import run_sampler
from ..inference.phi_select import CvPlan, select_phi
from ..prediction.forecast import forecast_horizon
from ..prediction.glm import fit_glm, glm_predictive
from ..sampling.rng import RngStream
from ..shared.errors import ModelError, invalid_parameter
from ..shared.interfaces import ModelConfig
from ..shared.log_context import bind_context
from ..shared.series import ObservedSeries
from .dgp import COVARIATE_NAMES, DgpSpec, generate

MODELS = ("proposed", "glm")
PHI_STRATEGIES = ("fixed", "cv")
HOLDOUT_FRACTION = 0.1


@dataclass(frozen=True)
class ReplicationRecord:
    replication: int
    model: str
    beta_hat: tuple[float, ...] = ()
    scores: ScoreReport | None = None
    phi: float = float("nan")
    error: str = ""

    @property
    def ok(self) -> bool:
        return self.scores is not None


@dataclass(frozen=True)
class StudyTable:
    spec: DgpSpec
    n_reps: int
    models: tuple[str, ...]
    records: tuple[ReplicationRecord, ...]
    mse: dict[str, dict[str, float]] = field(default_factory=dict)
    mean_scores: dict[str, dict[str, float]] = field(default_factory=dict)
    failed: dict[str, int] = field(default_factory=dict)

    def mse_rows(self) -> list[dict[str, object]]:
        return [
            {"coefficient": name, **{model: self.mse[model][name] for model in self.models}}
            for name in COVARIATE_NAMES
        ]

    def score_rows(self) -> list[dict[str, object]]:
        return [
            {"model": model, **self.mean_scores[model], "failed": self.failed[model]} for model in self.models
        ]


def recompute_mse(records: Iterable[ReplicationRecord], beta: Sequence[float], model: str) -> dict[str, float]:
    """Coefficient MSE over the successful replications of ``model``."""
    estimates = np.array([record.beta_hat for record in records if record.model == model and record.ok])
    if estimates.size == 0:
        return {name: float("nan") for name in COVARIATE_NAMES}
    squared = (estimates - np.asarray(beta, dtype=float)[None, :]) ** 2
    return {name: float(value) for name, value in zip(COVARIATE_NAMES, squared.mean(axis=0))}


def _mean_scores(records: Iterable[ReplicationRecord], model: str) -> dict[str, float]:
    reports = [record.scores for record in records if record.model == model and record.scores is not None]
    if not reports:
        return {name: float("nan") for name in ("brier", "spherical", "rps", "rmse")}
    return {
        "brier": float(np.mean([r.brier for r in reports])),
        "spherical": float(np.mean([r.spherical for r in reports])),
        "rps": float(np.mean([r.rps for r in reports])),
        "rmse": float(np.mean([r.rmse for r in reports])),
    }


def _replication_seed(rng: RngStream) -> int:
    return int(rng.child("seed").generator.integers(0, 2**63 - 1))


def _fit_proposed(
    rng: RngStream,
    train: ObservedSeries,
    test: ObservedSeries,
    config: ModelConfig,
    phi_strategy: str,
) -> tuple[np.ndarray, ScoreReport, float]:
    rep_config = replace(config, seed=_replication_seed(rng), threads=1)
    phi = rep_config.phi
    if phi_strategy == "cv":
        phi = select_phi(train, rep_config, CvPlan(grid=rep_config.phi_grid)).phi_opt
        rep_config = replace(rep_config, phi=phi)
    factor = build_correlation(train.index, phi)
    samples = run_sampler(train, rep_config, factor)
    forecasts = forecast_horizon(
        samples,
        train,
        factor,
        test.design,
        test.times,
        rng.child("forecast"),
        level=config.interval_level,
        tail_mass=config.tail_mass,
    )
    return samples.beta_matrix().mean(axis=0), score_horizon(forecasts, test.counts), phi


def _fit_glm(train: ObservedSeries, test: ObservedSeries, config: ModelConfig) -> tuple[np.ndarray, ScoreReport]:
    fit = fit_glm(train)
    forecasts = [
        glm_predictive(fit, x_new, t_new=float(t_new), level=config.interval_level, tail_mass=config.tail_mass)
        for x_new, t_new in zip(test.design, test.times)
    ]
    return fit.beta_hat, score_horizon(forecasts, test.counts)


def _run_replication(
    rng: RngStream,
    spec: DgpSpec,
    replication: int,
    models: tuple[str, ...],
    config: ModelConfig,
    phi_strategy: str,
) -> list[ReplicationRecord]:
    rep_rng = rng.child("rep", replication)
    records: list[ReplicationRecord] = []
    with bind_context(replication=replication):
        generated = generate(rep_rng.child("data"), spec)
        n_test = int(math.floor(HOLDOUT_FRACTION * spec.n_obs + 0.5))
        train, test = generated.series.split(spec.n_obs - n_test)
        for model in models:
            try:
                if model == "proposed":
                    beta_hat, scores, phi = _fit_proposed(rep_rng.child("proposed"), train, test, config, phi_strategy)
                    records.append(
                        ReplicationRecord(replication, model, tuple(float(b) for b in beta_hat), scores, phi)
                    )
                else:
                    beta_hat, scores = _fit_glm(train, test, config)
                    records.append(ReplicationRecord(replication, model, tuple(float(b) for b in beta_hat), scores))
            except ModelError as exc:
                logging.warning("replication failed: model=%s error=%s", model, exc)
                records.append(ReplicationRecord(replication, model, error=str(exc)))
        logging.debug("replication done: %s", replication)
    return records


def run_study(
    rng: RngStream,
    spec: DgpSpec,
    n_reps: int,
    models: Iterable[str] = MODELS,
    *,
    config: ModelConfig | None = None,
    phi_strategy: str = "fixed",
) -> StudyTable:
    """Repeat generate / fit / forecast ``n_reps`` times and aggregate coefficient MSE and tail scores.

    The last 10% of every simulated series is held out for scoring. Failed
    (replication, model) pairs are excluded and counted per model.
    """
    config = (config or ModelConfig()).require_valid()
    models = tuple(dict.fromkeys(models))
    if n_reps < 2:
        raise invalid_parameter(f"n_reps must be >= 2, got {n_reps}")
    if not models or any(model not in MODELS for model in models):
        raise invalid_parameter(f"models must be a non-empty subset of {MODELS}, got {list(models)}")
    if phi_strategy not in PHI_STRATEGIES:
        raise invalid_parameter(f"phi_strategy must be one of {PHI_STRATEGIES}, got {phi_strategy!r}")

    def replicate(replication: int) -> list[ReplicationRecord]:
        return _run_replication(rng, spec, replication, models, config, phi_strategy)

    workers = max(1, min(config.threads, n_reps))
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            futures = [pool.submit(contextvars.copy_context().run, replicate, r) for r in range(n_reps)]
            batches = [future.result() for future in futures]
    else:
        batches = [replicate(r) for r in range(n_reps)]
    records = tuple(record for batch in batches for record in batch)

    failed = {model: sum(1 for r in records if r.model == model and not r.ok) for model in models}
    table = StudyTable(
        spec=spec,
        n_reps=n_reps,
        models=models,
        records=records,
        mse={model: recompute_mse(records, spec.beta, model) for model in models},
        mean_scores={model: _mean_scores(records, model) for model in models},
        failed=failed,
    )
    logging.info("study done: dgp=%s reps=%s failed=%s", spec.dgp_id, n_reps, failed)
    return table
