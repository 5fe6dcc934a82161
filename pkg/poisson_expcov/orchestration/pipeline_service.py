from __future__ import annotations

import logging
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Sequence

import numpy as np
import pandas as pd
from scipy import stats

from poisson_expcov.evaluation.scoring import (
    brier_score,
    fit_metrics,
    fitted_values,
    metrics_from_fitted,
    ranked_probability_score,
    score_horizon,
    spherical_score,
)
from poisson_expcov.inference.covariance import build_correlation
from poisson_expcov.inference.gibbs import run_sampler
from poisson_expcov.inference.phi_select import CvPlan, select_phi
from poisson_expcov.inference.summary import summarize_posterior
from poisson_expcov.prediction.forecast import PredictiveDistribution, forecast_horizon
from poisson_expcov.prediction.glm import fit_glm
from poisson_expcov.sampling.rng import RngStream
from poisson_expcov.shared.errors import ModelError, input_mismatch, invalid_parameter, schema_error
from poisson_expcov.shared.interfaces import ModelConfig
from poisson_expcov.shared.series import ObservedSeries, PosteriorSamples
from poisson_expcov.simulation.dgp import DgpSpec
from poisson_expcov.simulation.study import run_study

from .csv_io import (
    DesignSpec,
    IngestOptions,
    draws_frame,
    horizon_design,
    ingest_csv,
    ingest_future_csv,
    read_table,
    read_truth_csv,
    samples_from_frame,
    write_table,
)
from .manifest import RunManifest, file_digest, payload_digest, times_digest

DRAWS_FILE = "draws.csv"
METRICS_FILE = "metrics.csv"
COEFFICIENTS_FILE = "coefficients.csv"
FITTED_FILE = "fitted.csv"
CONVERGENCE_FILE = "convergence.csv"
CV_FILE = "cv_scores.csv"
PMF_FILE = "forecast_pmf.csv"
FORECAST_SUMMARY_FILE = "forecast_summary.csv"
STUDY_MSE_FILE = "study_mse.csv"
STUDY_SCORES_FILE = "study_scores.csv"
STUDY_REPLICATIONS_FILE = "study_replications.csv"
SCORES_FILE = "scores.csv"
SCORE_POINTS_FILE = "score_points.csv"


@dataclass(frozen=True)
class FitArtifacts:
    draws_path: Path
    metrics_path: Path
    coefficients_path: Path
    fitted_path: Path
    convergence_path: Path
    samples: PosteriorSamples
    metrics: dict[str, Any]

    def to_payload(self) -> dict[str, Any]:
        return {
            "draws_path": str(self.draws_path),
            "metrics_path": str(self.metrics_path),
            "coefficients_path": str(self.coefficients_path),
            "fitted_path": str(self.fitted_path),
            "convergence_path": str(self.convergence_path),
            "draws": len(self.samples),
            "burn_sweeps": self.samples.burn_sweeps_used,
            "metrics": self.metrics,
        }


@dataclass(frozen=True)
class CvArtifacts:
    scores_path: Path
    phi_opt: float
    criterion: str
    n_train: int

    def to_payload(self) -> dict[str, Any]:
        return {
            "scores_path": str(self.scores_path),
            "phi_opt": self.phi_opt,
            "criterion": self.criterion,
            "n_train": self.n_train,
        }


@dataclass(frozen=True)
class ForecastArtifacts:
    pmf_path: Path
    summary_path: Path
    forecasts: tuple[PredictiveDistribution, ...]
    scores: dict[str, Any] | None = None

    def to_payload(self) -> dict[str, Any]:
        return {
            "pmf_path": str(self.pmf_path),
            "summary_path": str(self.summary_path),
            "horizon": len(self.forecasts),
            "point_forecasts": [f.point_forecast for f in self.forecasts],
            "scores": self.scores,
        }


@dataclass(frozen=True)
class StudyArtifacts:
    mse_path: Path
    scores_path: Path
    replications_path: Path
    mse: dict[str, dict[str, float]]
    failed: dict[str, int]

    def to_payload(self) -> dict[str, Any]:
        return {
            "mse_path": str(self.mse_path),
            "scores_path": str(self.scores_path),
            "replications_path": str(self.replications_path),
            "mse": self.mse,
            "failed": self.failed,
        }


@dataclass(frozen=True)
class ScoreArtifacts:
    scores_path: Path
    points_path: Path
    report: dict[str, Any] = field(default_factory=dict)

    def to_payload(self) -> dict[str, Any]:
        return {"scores_path": str(self.scores_path), "points_path": str(self.points_path), "report": self.report}


def _manifest(
    command: str,
    config: ModelConfig,
    input_digest: str,
    *,
    timings: dict[str, Any] | None = None,
    extra: dict[str, Any] | None = None,
) -> RunManifest:
    return RunManifest(
        command=command,
        config=config.snapshot(),
        input_digest=input_digest,
        seed=config.seed,
        timings=dict(timings or {}),
        extra=dict(extra or {}),
    )


def _elapsed(started: float) -> float:
    return round(time.monotonic() - started, 3)


def _fit_posterior(series: ObservedSeries, config: ModelConfig) -> PosteriorSamples:
    factor = build_correlation(series.index, config.phi)
    return run_sampler(series, config, factor)


def _glm_baseline(series: ObservedSeries, level: float) -> tuple[dict[str, Any], list[dict[str, Any]]]:
    """GLM metrics row plus Wald coefficient rows; a failed fit yields NaN metrics and no rows."""
    row: dict[str, Any] = {
        "model": "glm",
        "loglik": float("nan"),
        "r2": float("nan"),
        "rmse": float("nan"),
        "converged": False,
    }
    try:
        fit = fit_glm(series)
    except ModelError as exc:
        logging.warning("glm baseline failed: %s", exc)
        return row, []
    row.update(metrics_from_fitted(series.counts, fit.fitted, fit.loglik).as_dict())
    row["converged"] = fit.converged
    z = float(stats.norm.ppf(0.5 + 0.5 * level))
    coefficients = [
        {
            "model": "glm",
            "coefficient": f"beta[{name}]",
            "mean": float(estimate),
            "sd": float(se),
            "lo": float(estimate - z * se),
            "hi": float(estimate + z * se),
        }
        for name, estimate, se in zip(series.covariate_names, fit.beta_hat, fit.standard_errors)
    ]
    return row, coefficients


def run_fit(data_path: Path, config: ModelConfig, ingest: IngestOptions, out_dir: Path) -> FitArtifacts:
    started = time.monotonic()
    logging.info("fit: data=%s phi=%s", data_path, config.phi)
    series, _ = ingest_csv(data_path, ingest)
    digest = file_digest(data_path)
    samples = _fit_posterior(series, config)

    summary = summarize_posterior(samples, config.interval_level)
    metrics = fit_metrics(samples, series, loglik_mode=config.loglik_mode)
    proposed_row = {
        "model": "proposed",
        **metrics.as_dict(),
        "converged": True,
        "sigma2_hat": summary.row("sigma2").mean,
        "sigmaw2_hat": summary.row("sigmaw2").mean,
        "variance_share": summary.variance_share,
        "phi": samples.phi_used,
        "burn_sweeps": samples.burn_sweeps_used,
    }
    glm_row, glm_coefficients = _glm_baseline(series, config.interval_level)
    metrics_table = pd.DataFrame([proposed_row, glm_row])
    coefficients = pd.DataFrame(
        [{"model": "proposed", **row.as_row()} for row in summary.rows] + glm_coefficients,
        columns=["model", "coefficient", "mean", "sd", "lo", "hi"],
    )

    timings = {"burn_sweeps": samples.burn_sweeps_used, "draws": len(samples), "thin": samples.thin}
    manifest = _manifest(
        "fit",
        config,
        digest,
        timings=timings,
        extra={
            "phi": samples.phi_used,
            "burn_sweeps": samples.burn_sweeps_used,
            "thin": samples.thin,
            "gr_history": [list(item) for item in samples.gr_history],
            "coef_names": list(series.covariate_names),
            "n_obs": series.n_obs,
            "ingest": ingest.as_dict(),
        },
    )
    out_dir = Path(out_dir)
    fitted = pd.DataFrame({"time": series.times, "y": series.counts, "fitted": fitted_values(samples)})
    convergence = pd.DataFrame(samples.gr_history, columns=["sweep", "max_rhat"])
    artifacts = FitArtifacts(
        draws_path=write_table(out_dir / DRAWS_FILE, draws_frame(samples, series.n_obs), manifest),
        metrics_path=write_table(out_dir / METRICS_FILE, metrics_table, manifest),
        coefficients_path=write_table(out_dir / COEFFICIENTS_FILE, coefficients, manifest),
        fitted_path=write_table(out_dir / FITTED_FILE, fitted, manifest),
        convergence_path=write_table(out_dir / CONVERGENCE_FILE, convergence, manifest),
        samples=samples,
        metrics=proposed_row,
    )
    logging.info(
        "fit done: r2=%.4f rmse=%.4f loglik=%.3f elapsed=%ss",
        metrics.r2,
        metrics.rmse,
        metrics.loglik,
        _elapsed(started),
    )
    return artifacts


def run_cv(
    data_path: Path,
    config: ModelConfig,
    ingest: IngestOptions,
    out_dir: Path,
    *,
    criterion: str = "rps",
) -> CvArtifacts:
    started = time.monotonic()
    logging.info("cv: data=%s grid=%s criterion=%s", data_path, list(config.phi_grid), criterion)
    series, _ = ingest_csv(data_path, ingest)
    result = select_phi(series, config, CvPlan(grid=config.phi_grid, criterion=criterion))
    manifest = _manifest(
        "cv",
        config,
        file_digest(data_path),
        timings={"fits": len(result.rows), "burn_sweeps": sum(row.burn_sweeps for row in result.rows)},
        extra={"phi_opt": result.phi_opt, "criterion": criterion, "n_train": result.n_train},
    )
    table = pd.DataFrame([row.as_row() for row in result.rows])
    path = write_table(Path(out_dir) / CV_FILE, table, manifest)
    logging.info("cv done: phi_opt=%s elapsed=%ss", result.phi_opt, _elapsed(started))
    return CvArtifacts(scores_path=path, phi_opt=result.phi_opt, criterion=criterion, n_train=result.n_train)


def _load_draws(
    draws_path: Path,
    data_path: Path,
    digest: str,
) -> tuple[ObservedSeries, DesignSpec, PosteriorSamples]:
    manifest, frame = read_table(draws_path)
    if manifest.command != "fit":
        raise schema_error(f"{draws_path} was not written by fit (command={manifest.command!r})")
    if manifest.input_digest != digest:
        raise input_mismatch(
            f"{draws_path} was fitted on different data than {data_path}",
            expected=manifest.input_digest,
            actual=digest,
        )
    ingest = IngestOptions(**manifest.extra.get("ingest", {}))
    series, spec = ingest_csv(data_path, ingest)
    coef_names = tuple(manifest.extra.get("coef_names", series.covariate_names))
    if coef_names != series.covariate_names:
        raise input_mismatch(f"draws cover coefficients {list(coef_names)}, data builds {list(series.covariate_names)}")
    samples = samples_from_frame(frame, manifest, coef_names, series.n_obs, draws_path)
    return series, spec, samples


def _future_rows(
    series: ObservedSeries,
    spec: DesignSpec,
    future_path: Path | None,
    horizon: int | None,
) -> tuple[np.ndarray, np.ndarray, np.ndarray | None]:
    if future_path is not None:
        return ingest_future_csv(future_path, spec)
    if horizon is None or horizon < 1:
        raise invalid_parameter("forecast needs a future CSV or a horizon >= 1")
    step = float(series.times[-1] - series.times[-2])
    times = series.index.last + step * np.arange(1, horizon + 1, dtype=float)
    return times, horizon_design(spec, times), None


def forecast_tables(forecasts: Sequence[PredictiveDistribution]) -> tuple[pd.DataFrame, pd.DataFrame]:
    pmf_rows = [
        {"t_new": f.t_new, "k": k, "prob": float(p)} for f in forecasts for k, p in enumerate(f.pmf)
    ]
    summary_rows = [
        {
            "t_new": f.t_new,
            "point_forecast": f.point_forecast,
            "lo": f.interval[0],
            "hi": f.interval[1],
            "level": f.level,
            "k_trunc": f.k_trunc,
        }
        for f in forecasts
    ]
    return pd.DataFrame(pmf_rows, columns=["t_new", "k", "prob"]), pd.DataFrame(summary_rows)


def run_forecast(
    data_path: Path,
    config: ModelConfig,
    ingest: IngestOptions,
    out_dir: Path,
    *,
    future_path: Path | None = None,
    horizon: int | None = None,
    draws_path: Path | None = None,
) -> ForecastArtifacts:
    """Predictive pmf per future point, from stored draws when given, otherwise from a fresh fit.

    Both paths draw the forecast noise from the same ``forecast`` stream of the
    configured seed, so stored draws reproduce the in-process tables exactly.
    """
    started = time.monotonic()
    digest = file_digest(data_path)
    if draws_path is not None:
        series, spec, samples = _load_draws(draws_path, data_path, digest)
    else:
        series, spec = ingest_csv(data_path, ingest)
        samples = _fit_posterior(series, config)
    factor = build_correlation(series.index, samples.phi_used)
    times, design, realized = _future_rows(series, spec, future_path, horizon)
    forecasts = forecast_horizon(
        samples,
        series,
        factor,
        design,
        times,
        RngStream.create(config.seed, "forecast"),
        level=config.interval_level,
        tail_mass=config.tail_mass,
        threads=config.threads,
    )

    scores = None
    if realized is not None:
        scores = score_horizon(forecasts, realized).as_dict()
        logging.info("future file carries counts; horizon scores: %s", scores)
    extra = {
        "phi": samples.phi_used,
        "times": [float(t) for t in times],
        "times_digest": times_digest(times),
        "point_forecasts": [f.point_forecast for f in forecasts],
        "intervals": [list(f.interval) for f in forecasts],
        "level": config.interval_level,
        "source": "draws" if draws_path is not None else "fit",
    }
    if draws_path is not None:
        extra["draws_digest"] = file_digest(draws_path)
    if future_path is not None:
        extra["future_digest"] = file_digest(future_path)
    manifest = _manifest(
        "forecast",
        config,
        digest,
        timings={"draws": len(samples), "horizon": len(forecasts)},
        extra=extra,
    )
    pmf_table, summary_table = forecast_tables(forecasts)
    out_dir = Path(out_dir)
    artifacts = ForecastArtifacts(
        pmf_path=write_table(out_dir / PMF_FILE, pmf_table, manifest),
        summary_path=write_table(out_dir / FORECAST_SUMMARY_FILE, summary_table, manifest),
        forecasts=tuple(forecasts),
        scores=scores,
    )
    logging.info("forecast done: horizon=%s elapsed=%ss", len(forecasts), _elapsed(started))
    return artifacts


def run_simulate(
    spec: DgpSpec,
    n_reps: int,
    config: ModelConfig,
    out_dir: Path,
    *,
    models: Sequence[str] = ("proposed", "glm"),
    phi_strategy: str = "fixed",
) -> StudyArtifacts:
    started = time.monotonic()
    logging.info("simulate: dgp=%s reps=%s n_obs=%s models=%s", spec.dgp_id, n_reps, spec.n_obs, list(models))
    rng = RngStream.create(config.seed, "simulate", spec.dgp_id)
    table = run_study(rng, spec, n_reps, models, config=config, phi_strategy=phi_strategy)
    manifest = _manifest(
        "simulate",
        config,
        payload_digest(asdict(spec)),
        timings={"replications": n_reps, "fits": len(table.records)},
        extra={"dgp": asdict(spec), "n_reps": n_reps, "models": list(table.models), "phi_strategy": phi_strategy},
    )
    replications = pd.DataFrame(
        [
            {
                "replication": record.replication,
                "model": record.model,
                **{f"beta_hat[{j}]": value for j, value in enumerate(record.beta_hat or (float("nan"),) * 3)},
                **(record.scores.as_dict() if record.scores is not None else {}),
                "phi": record.phi,
                "error": record.error,
            }
            for record in table.records
        ]
    )
    out_dir = Path(out_dir)
    artifacts = StudyArtifacts(
        mse_path=write_table(out_dir / STUDY_MSE_FILE, pd.DataFrame(table.mse_rows()), manifest),
        scores_path=write_table(out_dir / STUDY_SCORES_FILE, pd.DataFrame(table.score_rows()), manifest),
        replications_path=write_table(out_dir / STUDY_REPLICATIONS_FILE, replications, manifest),
        mse=table.mse,
        failed=table.failed,
    )
    logging.info("simulate done: elapsed=%ss", _elapsed(started))
    return artifacts


def forecasts_from_table(manifest: RunManifest, frame: pd.DataFrame, path: Path) -> list[PredictiveDistribution]:
    extra = manifest.extra
    try:
        times = [float(t) for t in extra["times"]]
        points = [float(p) for p in extra["point_forecasts"]]
        intervals = [tuple(item) for item in extra["intervals"]]
    except KeyError as exc:
        raise schema_error(f"{path} manifest lacks forecast metadata: {exc}") from exc
    missing = {"t_new", "k", "prob"} - set(frame.columns)
    if missing:
        raise schema_error(f"{path} is missing columns {sorted(missing)}")
    level = float(extra.get("level", 0.95))
    forecasts = []
    grouped = {float(t): group for t, group in frame.groupby("t_new", sort=False)}
    for t_new, point, interval in zip(times, points, intervals):
        group = grouped.get(t_new)
        if group is None:
            raise schema_error(f"{path} has no pmf rows for t_new={t_new}")
        pmf = np.zeros(int(group["k"].max()) + 1)
        pmf[group["k"].to_numpy(dtype=int)] = group["prob"].to_numpy(dtype=float)
        forecasts.append(
            PredictiveDistribution(t_new=t_new, pmf=pmf, point_forecast=point, interval=interval, level=level)
        )
    return forecasts


def run_score(forecast_path: Path, truth_path: Path, out_dir: Path, config: ModelConfig) -> ScoreArtifacts:
    manifest, frame = read_table(forecast_path)
    if manifest.command != "forecast":
        raise schema_error(f"{forecast_path} was not written by forecast (command={manifest.command!r})")
    truth_times, counts = read_truth_csv(truth_path)
    if times_digest(truth_times) != manifest.extra.get("times_digest"):
        raise input_mismatch(
            f"{truth_path} times do not match the forecast times in {forecast_path}",
            forecast_times=manifest.extra.get("times"),
            truth_times=[float(t) for t in truth_times],
        )
    forecasts = forecasts_from_table(manifest, frame, forecast_path)
    report = score_horizon(forecasts, counts)
    points = pd.DataFrame(
        [
            {
                "t_new": f.t_new,
                "y": int(y),
                "point_forecast": f.point_forecast,
                "brier": brier_score(f.pmf, int(y)),
                "spherical": spherical_score(f.pmf, int(y)),
                "rps": ranked_probability_score(f.pmf, int(y)),
            }
            for f, y in zip(forecasts, counts)
        ]
    )
    score_manifest = _manifest(
        "score",
        config,
        file_digest(truth_path),
        timings={"points": report.n_points},
        extra={"forecast_digest": file_digest(forecast_path), "forecast_input_digest": manifest.input_digest},
    )
    out_dir = Path(out_dir)
    artifacts = ScoreArtifacts(
        scores_path=write_table(out_dir / SCORES_FILE, pd.DataFrame([report.as_dict()]), score_manifest),
        points_path=write_table(out_dir / SCORE_POINTS_FILE, points, score_manifest),
        report=report.as_dict(),
    )
    logging.info("score done: %s", report.as_dict())
    return artifacts
