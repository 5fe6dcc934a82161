from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
from scipy import linalg
from scipy.special import gammaln, xlogy

from ..shared.errors import dimension_mismatch, divergence, not_converged, rank_deficient, validation_error
from ..shared.series import ObservedSeries, require_valid_series
from .forecast import DEFAULT_LEVEL, DEFAULT_TAIL_MASS, PredictiveDistribution, distribution_from_rates

MAX_ITERATIONS = 100
MAX_HALVINGS = 10
DEVIANCE_TOL = 1e-10
GRADIENT_TOL = 1e-8
_ETA_CEILING = 700.0
_ROUNDING_MARGIN = 64.0


@dataclass(frozen=True)
class GlmFit:
    beta_hat: np.ndarray
    standard_errors: np.ndarray
    converged: bool
    iterations: int
    loglik: float
    deviance: float
    gradient_norm: float
    fitted: np.ndarray
    coef_names: tuple[str, ...] = ()
    gradient_tolerance: float = GRADIENT_TOL


def poisson_loglik(counts: np.ndarray, eta: np.ndarray) -> float:
    counts = np.asarray(counts, dtype=float)
    return float(np.sum(-np.exp(eta) + eta * counts - gammaln(counts + 1.0)))


def _deviance(counts: np.ndarray, rate: np.ndarray) -> float:
    return float(2.0 * np.sum(xlogy(counts, counts) - xlogy(counts, rate) - (counts - rate)))


def _weighted_step(design: np.ndarray, counts: np.ndarray, eta: np.ndarray) -> np.ndarray:
    rate = np.exp(eta)
    working = eta + (counts - rate) / rate
    weighted = design * rate[:, None]
    factor = linalg.cho_factor(design.T @ weighted, lower=True)
    return linalg.cho_solve(factor, weighted.T @ working)


def _newton_increment(design: np.ndarray, counts: np.ndarray, eta: np.ndarray) -> np.ndarray:
    # IRLS step written as an increment so its rounding shrinks with the score
    rate = np.exp(eta)
    factor = linalg.cho_factor(design.T @ (design * rate[:, None]), lower=True)
    return linalg.cho_solve(factor, design.T @ (counts - rate))


def gradient_tolerance(design: np.ndarray, counts: np.ndarray, rate: np.ndarray, beta: np.ndarray) -> float:
    """Absolute score-norm bound: ``GRADIENT_TOL``, raised only to the rounding floor of ``X^T (y - mu)``."""
    eta_scale = np.abs(design) @ np.abs(beta)
    magnitude = float(np.linalg.norm(np.abs(design).T @ (np.abs(counts) + rate * (1.0 + eta_scale))))
    return max(GRADIENT_TOL, _ROUNDING_MARGIN * np.finfo(float).eps * magnitude)


def fit_glm(series: ObservedSeries) -> GlmFit:
    """Poisson log-link GLM by iteratively reweighted least squares with deviance step halving."""
    design = series.design
    if np.linalg.matrix_rank(design) < series.n_coef:
        raise rank_deficient(f"design matrix has rank below {series.n_coef} columns")
    require_valid_series(series)
    counts = series.counts.astype(float)
    if not np.any(counts > 0):
        raise validation_error("all counts are zero; the Poisson GLM has no finite maximum")

    eta = np.log(counts + 0.1)
    beta = _weighted_step(design, counts, eta)
    eta = np.minimum(design @ beta, _ETA_CEILING)
    deviance = _deviance(counts, np.exp(eta))
    converged = False
    iteration = 1
    gradient_norm = float("inf")

    while iteration < MAX_ITERATIONS:
        iteration += 1
        step = _newton_increment(design, counts, eta)
        for _halving in range(MAX_HALVINGS + 1):
            candidate = beta + step
            candidate_eta = np.minimum(design @ candidate, _ETA_CEILING)
            candidate_deviance = _deviance(counts, np.exp(candidate_eta))
            if np.isfinite(candidate_deviance) and candidate_deviance <= deviance * (1.0 + 1e-12) + 1e-12:
                break
            step = 0.5 * step
        else:
            raise divergence(
                f"IRLS deviance kept increasing after {MAX_HALVINGS} step halvings",
                iteration=iteration,
                deviance=deviance,
            )
        change = abs(deviance - candidate_deviance) / (abs(candidate_deviance) + 0.1)
        beta, eta, deviance = candidate, candidate_eta, candidate_deviance
        rate = np.exp(eta)
        gradient_norm = float(np.linalg.norm(design.T @ (counts - rate)))
        tolerance = gradient_tolerance(design, counts, rate, beta)
        if change < DEVIANCE_TOL and gradient_norm < tolerance:
            converged = True
            break

    rate = np.exp(eta)
    information = design.T @ (design * rate[:, None])
    covariance = linalg.cho_solve(linalg.cho_factor(information, lower=True), np.eye(series.n_coef))
    fit = GlmFit(
        beta_hat=beta,
        standard_errors=np.sqrt(np.diag(covariance)),
        converged=converged,
        iterations=iteration,
        loglik=poisson_loglik(counts, eta),
        deviance=deviance,
        gradient_norm=gradient_norm,
        fitted=rate,
        coef_names=series.covariate_names,
        gradient_tolerance=gradient_tolerance(design, counts, rate, beta),
    )
    if converged:
        logging.info("glm fit converged: iterations=%s deviance=%.6f", iteration, deviance)
    else:
        logging.warning("glm fit stopped without converging: iterations=%s gradient=%.3e", iteration, gradient_norm)
    return fit


def glm_predictive(
    fit: GlmFit,
    x_new: np.ndarray,
    *,
    t_new: float = float("nan"),
    level: float = DEFAULT_LEVEL,
    tail_mass: float = DEFAULT_TAIL_MASS,
) -> PredictiveDistribution:
    if not fit.converged:
        raise not_converged("GLM fit did not converge; refusing to forecast from it")
    x_new = np.asarray(x_new, dtype=float).reshape(-1)
    if x_new.shape[0] != fit.beta_hat.shape[0]:
        raise dimension_mismatch(f"x_new has length {x_new.shape[0]}, fit has {fit.beta_hat.shape[0]} coefficients")
    rate = float(np.exp(x_new @ fit.beta_hat))
    return distribution_from_rates(t_new, np.array([rate]), level=level, tail_mass=tail_mass)
