from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..sampling.distributions import InnovationSpec, sample_poisson, simulate_ar
from ..sampling.rng import RngStream
from ..shared.errors import invalid_parameter
from ..shared.series import ObservedSeries, TimeIndex

DGP_IDS = (1, 2, 3)
DEFAULT_BETA = (0.15, -0.28, 0.18)
AR3_COEFFS = (0.2, -0.3, 0.1)
AR1_COEFF = 0.5
STUDENT_DF = 5.0
COVARIATE_NAMES = ("intercept", "x1", "x2")


@dataclass(frozen=True)
class DgpSpec:
    """One simulation regime.

    1: iid standard normal errors. 2: AR(3) errors with normal innovations.
    3: AR(1) plus independent Student-t(5) errors. ``noise_scale`` multiplies
    the error path; 0 gives noise-free log rates.
    """

    dgp_id: int
    n_obs: int = 100
    beta: tuple[float, float, float] = DEFAULT_BETA
    noise_scale: float = 1.0
    covariate_scale: float = 1.0

    def violations(self) -> list[str]:
        problems: list[str] = []
        if self.dgp_id not in DGP_IDS:
            problems.append(f"dgp_id must be one of {DGP_IDS}, got {self.dgp_id}")
        if self.n_obs < 20:
            problems.append(f"n_obs must be >= 20, got {self.n_obs}")
        if len(self.beta) != 3:
            problems.append("beta must hold exactly three coefficients")
        if self.noise_scale < 0:
            problems.append("noise_scale must be >= 0")
        if not self.covariate_scale > 0:
            problems.append("covariate_scale must be > 0")
        return problems

    def noise_variance(self) -> float:
        """Stationary variance of the error path before ``noise_scale``."""
        if self.dgp_id == 1:
            return 1.0
        if self.dgp_id == 2:
            return _ar_variance(AR3_COEFFS)
        return 1.0 / (1.0 - AR1_COEFF**2) + STUDENT_DF / (STUDENT_DF - 2.0)


def _ar_variance(coeffs: tuple[float, ...]) -> float:
    # gamma_0 from the Yule-Walker system with unit innovation variance
    order = len(coeffs)
    system = np.zeros((order + 1, order + 1))
    rhs = np.zeros(order + 1)
    rhs[0] = 1.0
    for lag in range(order + 1):
        system[lag, lag] += 1.0
        for j, a in enumerate(coeffs, start=1):
            system[lag, abs(lag - j)] -= a
    return float(np.linalg.solve(system, rhs)[0])


@dataclass(frozen=True)
class GeneratedSeries:
    series: ObservedSeries
    beta: np.ndarray
    noise: np.ndarray
    log_rate: np.ndarray


def error_path(rng: RngStream, spec: DgpSpec) -> np.ndarray:
    if spec.dgp_id == 1:
        path = rng.standard_normal(spec.n_obs)
    elif spec.dgp_id == 2:
        path = simulate_ar(rng.child("ar"), AR3_COEFFS, InnovationSpec("normal", 1.0), spec.n_obs)
    else:
        persistent = simulate_ar(rng.child("ar"), (AR1_COEFF,), InnovationSpec("normal", 1.0), spec.n_obs)
        heavy = InnovationSpec("student_t", 1.0, STUDENT_DF).draw(rng.child("t"), spec.n_obs)
        path = persistent + heavy
    return spec.noise_scale * np.asarray(path, dtype=float)


def generate(rng: RngStream, spec: DgpSpec) -> GeneratedSeries:
    problems = spec.violations()
    if problems:
        raise invalid_parameter("invalid dgp spec: " + "; ".join(problems), violations=problems)
    covariates = spec.covariate_scale * rng.child("covariates").standard_normal((spec.n_obs, 2))
    design = np.column_stack([np.ones(spec.n_obs), covariates])
    beta = np.asarray(spec.beta, dtype=float)
    noise = error_path(rng.child("noise"), spec)
    log_rate = design @ beta + noise
    counts = sample_poisson(rng.child("counts"), np.exp(log_rate))
    series = ObservedSeries(
        index=TimeIndex(np.arange(1, spec.n_obs + 1, dtype=float)),
        counts=counts,
        design=design,
        covariate_names=COVARIATE_NAMES,
    )
    return GeneratedSeries(series=series, beta=beta, noise=noise, log_rate=log_rate)
