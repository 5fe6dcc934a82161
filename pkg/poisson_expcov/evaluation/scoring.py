"""Proper scoring rules for count forecasts and in-sample fit metrics.

All three rules are negatively oriented (smaller is better). Counts above the
truncated support have zero forecast probability.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from ..prediction.forecast import PredictiveDistribution
from ..prediction.glm import poisson_loglik
from ..shared.errors import dimension_mismatch, empty_posterior, invalid_parameter, invalid_pmf
from ..shared.interfaces import LOGLIK_MODES
from ..shared.series import ObservedSeries, PosteriorSamples

PMF_SUM_TOL = 1e-6


def _check_pmf(pmf: np.ndarray | Sequence[float], y: int) -> tuple[np.ndarray, int]:
    pmf = np.asarray(pmf, dtype=float).reshape(-1)
    if pmf.size == 0 or not np.all(np.isfinite(pmf)) or np.any(pmf < 0):
        raise invalid_pmf("pmf entries must be finite and >= 0")
    total = float(pmf.sum())
    if not 1.0 - PMF_SUM_TOL <= total <= 1.0 + 1e-9:
        raise invalid_pmf(f"pmf sums to {total}, expected 1 within {PMF_SUM_TOL}")
    if y < 0 or int(y) != y:
        raise invalid_parameter(f"observed count must be a non-negative integer, got {y}")
    return pmf, int(y)


def _prob_at(pmf: np.ndarray, y: int) -> float:
    return float(pmf[y]) if y < pmf.shape[0] else 0.0


def brier_score(pmf: np.ndarray | Sequence[float], y: int) -> float:
    pmf, y = _check_pmf(pmf, y)
    return -2.0 * _prob_at(pmf, y) + float(pmf @ pmf)


def spherical_score(pmf: np.ndarray | Sequence[float], y: int) -> float:
    pmf, y = _check_pmf(pmf, y)
    return -_prob_at(pmf, y) / float(np.sqrt(pmf @ pmf))


def ranked_probability_score(pmf: np.ndarray | Sequence[float], y: int) -> float:
    pmf, y = _check_pmf(pmf, y)
    cdf = np.cumsum(pmf)
    k_trunc = pmf.shape[0] - 1
    step = (np.arange(k_trunc + 1) >= y).astype(float)
    score = float(np.sum((cdf - step) ** 2))
    if y > k_trunc:
        # k = K+1 .. y-1 keep the last cdf value against an indicator of 0
        score += (y - 1 - k_trunc) * float(cdf[-1]) ** 2
    return score


@dataclass(frozen=True)
class ScoreReport:
    brier: float
    spherical: float
    rps: float
    n_points: int
    rmse: float = float("nan")

    def as_dict(self) -> dict[str, float | int]:
        return {
            "brier": self.brier,
            "spherical": self.spherical,
            "rps": self.rps,
            "rmse": self.rmse,
            "n_points": self.n_points,
        }

    def criterion(self, name: str) -> float:
        if name not in ("brier", "spherical", "rps", "rmse"):
            raise invalid_parameter(f"unknown criterion {name!r}")
        return float(getattr(self, name))


def score_horizon(
    forecasts: Sequence[PredictiveDistribution],
    observed: np.ndarray | Sequence[int],
) -> ScoreReport:
    """Mean of each rule over the horizon, plus the RMSE of the point forecasts."""
    observed = np.asarray(observed).reshape(-1)
    if len(forecasts) != observed.shape[0]:
        raise dimension_mismatch(f"{len(forecasts)} forecasts for {observed.shape[0]} observations")
    if observed.size == 0:
        raise invalid_parameter("cannot score an empty horizon")
    brier = [brier_score(f.pmf, int(y)) for f, y in zip(forecasts, observed)]
    spherical = [spherical_score(f.pmf, int(y)) for f, y in zip(forecasts, observed)]
    rps = [ranked_probability_score(f.pmf, int(y)) for f, y in zip(forecasts, observed)]
    points = np.array([f.point_forecast for f in forecasts])
    return ScoreReport(
        brier=float(np.mean(brier)),
        spherical=float(np.mean(spherical)),
        rps=float(np.mean(rps)),
        n_points=int(observed.size),
        rmse=float(np.sqrt(np.mean((observed - points) ** 2))),
    )


@dataclass(frozen=True)
class FitMetrics:
    loglik: float
    r2: float
    rmse: float

    def as_dict(self) -> dict[str, float]:
        return {"loglik": self.loglik, "r2": self.r2, "rmse": self.rmse}


def metrics_from_fitted(counts: np.ndarray, fitted: np.ndarray, loglik: float) -> FitMetrics:
    counts = np.asarray(counts, dtype=float)
    residual = counts - np.asarray(fitted, dtype=float)
    total = float(np.sum((counts - counts.mean()) ** 2))
    r2 = 1.0 - float(residual @ residual) / total if total > 0 else float("nan")
    return FitMetrics(loglik=float(loglik), r2=r2, rmse=float(np.sqrt(np.mean(residual**2))))


def fitted_values(samples: PosteriorSamples) -> np.ndarray:
    """``exp`` of the posterior mean log-intensity at every observed time."""
    if len(samples) == 0:
        raise empty_posterior("posterior has no draws")
    return np.exp(samples.mu_matrix().mean(axis=0))


def fit_metrics(
    samples: PosteriorSamples,
    series: ObservedSeries,
    *,
    loglik_mode: str = "posterior_mean",
) -> FitMetrics:
    if len(samples) == 0:
        raise empty_posterior("posterior has no draws")
    if loglik_mode not in LOGLIK_MODES:
        raise invalid_parameter(f"loglik_mode must be one of {LOGLIK_MODES}, got {loglik_mode!r}")
    mu = samples.mu_matrix()
    if mu.shape[1] != series.n_obs:
        raise dimension_mismatch(f"draws cover {mu.shape[1]} time points, series has {series.n_obs}")
    mu_bar = mu.mean(axis=0)
    if loglik_mode == "posterior_mean":
        loglik = poisson_loglik(series.counts, mu_bar)
    else:
        loglik = float(np.mean([poisson_loglik(series.counts, row) for row in mu]))
    return metrics_from_fitted(series.counts, np.exp(mu_bar), loglik)
