from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
from scipy import stats

from ..inference.covariance import CorrelationFactor, cross_correlation, solve
from ..sampling.rng import RngStream
from ..shared.errors import dimension_mismatch, empty_posterior, invalid_parameter, invalid_pmf, validation_error
from ..shared.series import ObservedSeries, PosteriorSamples

DEFAULT_TAIL_MASS = 1e-8
DEFAULT_LEVEL = 0.95
_RATE_CHUNK = 256
_MIN_RATE = 1e-300
MAX_SUPPORT = 1_000_000


@dataclass(frozen=True)
class PredictiveDistribution:
    t_new: float
    pmf: np.ndarray
    point_forecast: float
    interval: tuple[int, int]
    level: float = DEFAULT_LEVEL

    def __post_init__(self) -> None:
        pmf = np.array(self.pmf, dtype=float).reshape(-1)
        pmf.setflags(write=False)
        object.__setattr__(self, "pmf", pmf)
        object.__setattr__(self, "interval", (int(self.interval[0]), int(self.interval[1])))

    @property
    def k_trunc(self) -> int:
        return int(self.pmf.shape[0] - 1)

    def cdf(self) -> np.ndarray:
        return np.cumsum(self.pmf)

    def mean(self) -> float:
        return float(np.arange(self.pmf.shape[0]) @ self.pmf)

    def violations(self) -> list[str]:
        problems: list[str] = []
        if np.any(self.pmf < 0):
            problems.append("negative pmf entries")
        total = float(self.pmf.sum())
        if not 1.0 - 1e-6 <= total <= 1.0 + 1e-9:
            problems.append(f"pmf sums to {total}")
        lo, hi = self.interval
        if lo > hi:
            problems.append("interval lower bound above upper bound")
        cdf = self.cdf()
        below = cdf[lo - 1] if lo > 0 else 0.0
        if cdf[min(hi, self.k_trunc)] - below < self.level - 1e-12:
            problems.append("interval covers less than the requested level")
        return problems


def pmf_from_rates(rates: np.ndarray, tail_mass: float = DEFAULT_TAIL_MASS) -> np.ndarray:
    """Equal-weight Poisson mixture pmf on ``0..K``, ``K`` the first count with tail mass below ``tail_mass``."""
    rates = np.asarray(rates, dtype=float).reshape(-1)
    if rates.size == 0:
        raise empty_posterior("no rates to mix")
    if not np.all(np.isfinite(rates)) or np.any(rates < 0):
        raise invalid_pmf("predictive rates must be finite and >= 0")
    rates = np.maximum(rates, _MIN_RATE)
    # the largest rate has the heaviest tail, so its quantile bounds the mixture support
    quantile = float(stats.poisson.isf(tail_mass, rates.max()))
    if not np.isfinite(quantile) or quantile >= MAX_SUPPORT:
        raise invalid_parameter(
            f"predictive rate {rates.max():.6g} needs a support beyond {MAX_SUPPORT} counts",
            max_rate=float(rates.max()),
        )
    upper = int(quantile) + 1
    counts = np.arange(upper + 1)
    pmf = np.zeros(upper + 1)
    survival = np.zeros(upper + 1)
    for start in range(0, rates.size, _RATE_CHUNK):
        chunk = rates[start : start + _RATE_CHUNK, None]
        pmf += stats.poisson.pmf(counts[None, :], chunk).sum(axis=0)
        survival += stats.poisson.sf(counts[None, :], chunk).sum(axis=0)
    pmf /= rates.size
    survival /= rates.size
    below = np.flatnonzero(survival < tail_mass)
    k_trunc = int(below[0]) if below.size else upper
    return pmf[: k_trunc + 1]


def equal_tailed_interval(pmf: np.ndarray, level: float) -> tuple[int, int]:
    if not 0.0 < level < 1.0:
        raise invalid_parameter(f"interval level must be in (0, 1), got {level}")
    cdf = np.cumsum(pmf)
    tail = 0.5 * (1.0 - level)
    last = cdf.shape[0] - 1
    lo = min(int(np.searchsorted(cdf, tail, side="left")), last)
    hi = min(int(np.searchsorted(cdf, 1.0 - tail, side="left")), last)
    return lo, hi


def distribution_from_rates(
    t_new: float,
    rates: np.ndarray,
    *,
    level: float = DEFAULT_LEVEL,
    tail_mass: float = DEFAULT_TAIL_MASS,
) -> PredictiveDistribution:
    pmf = pmf_from_rates(rates, tail_mass)
    return PredictiveDistribution(
        t_new=float(t_new),
        pmf=pmf,
        point_forecast=float(np.mean(rates)),
        interval=equal_tailed_interval(pmf, level),
        level=level,
    )


def _conditioning_weights(factor: CorrelationFactor, t_new: float) -> tuple[np.ndarray, float]:
    if np.any(factor.index.times == t_new):
        raise invalid_parameter(f"t_new={t_new} coincides with an observed time")
    correlation = cross_correlation(factor.index, factor.phi, t_new)
    weights = solve(factor, correlation)
    explained = float(np.clip(correlation @ weights, 0.0, 1.0))
    return weights, explained


def w_new_moments(factor: CorrelationFactor, w: np.ndarray, sigmaw2: float, t_new: float) -> tuple[float, float]:
    """Conditional mean and variance of the latent process at ``t_new`` given ``w``."""
    weights, explained = _conditioning_weights(factor, t_new)
    w = factor.check_length(w, "w")
    return float(weights @ w), float(sigmaw2 * (1.0 - explained))


def sample_w_new(rng: RngStream, factor: CorrelationFactor, w: np.ndarray, sigmaw2: float, t_new: float) -> float:
    mean, variance = w_new_moments(factor, w, sigmaw2, t_new)
    return mean + np.sqrt(variance) * float(rng.standard_normal())


def predictive_distribution(
    samples: PosteriorSamples,
    series: ObservedSeries,
    factor: CorrelationFactor,
    x_new: np.ndarray,
    t_new: float,
    rng: RngStream,
    *,
    level: float = DEFAULT_LEVEL,
    tail_mass: float = DEFAULT_TAIL_MASS,
) -> PredictiveDistribution:
    """Posterior predictive pmf at ``t_new``, one latent draw per posterior draw."""
    if len(samples) == 0:
        raise empty_posterior("posterior has no draws")
    x_new = np.asarray(x_new, dtype=float).reshape(-1)
    if x_new.shape[0] != series.n_coef:
        raise dimension_mismatch(f"x_new has length {x_new.shape[0]}, design has {series.n_coef} columns")
    weights, explained = _conditioning_weights(factor, float(t_new))

    w_mean = samples.w_matrix() @ weights
    w_sd = np.sqrt(samples.sigmaw2_vector() * (1.0 - explained))
    noise = rng.standard_normal((2, len(samples)))
    w_new = w_mean + w_sd * noise[0]
    mu_new = samples.beta_matrix() @ x_new + w_new + np.sqrt(samples.sigma2_vector()) * noise[1]
    return distribution_from_rates(t_new, np.exp(mu_new), level=level, tail_mass=tail_mass)


def forecast_horizon(
    samples: PosteriorSamples,
    series: ObservedSeries,
    factor: CorrelationFactor,
    x_future: np.ndarray,
    times_future: np.ndarray,
    rng: RngStream,
    *,
    level: float = DEFAULT_LEVEL,
    tail_mass: float = DEFAULT_TAIL_MASS,
    threads: int = 1,
) -> list[PredictiveDistribution]:
    """Independent predictive distributions per future point, each conditioned on the observed window only."""
    times_future = np.asarray(times_future, dtype=float).reshape(-1)
    x_future = np.asarray(x_future, dtype=float)
    if x_future.ndim == 1:
        x_future = x_future.reshape(-1, series.n_coef)
    if x_future.shape[0] != times_future.shape[0]:
        raise dimension_mismatch(f"{x_future.shape[0]} future design rows for {times_future.shape[0]} times")
    if times_future.size == 0:
        raise validation_error("forecast horizon is empty")
    if times_future[0] <= series.index.last or np.any(np.diff(times_future) <= 0):
        raise validation_error("future times must be strictly increasing and after the last observation")

    def one_point(j: int) -> PredictiveDistribution:
        return predictive_distribution(
            samples,
            series,
            factor,
            x_future[j],
            float(times_future[j]),
            rng.child("horizon", j),
            level=level,
            tail_mass=tail_mass,
        )

    if threads > 1 and times_future.size > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            result = list(pool.map(one_point, range(times_future.size)))
    else:
        result = [one_point(j) for j in range(times_future.size)]
    logging.info("forecast horizon done: points=%s draws=%s", len(result), len(samples))
    return result
