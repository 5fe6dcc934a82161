from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.signal import lfilter

from ..shared.errors import dimension_mismatch, invalid_parameter, non_stationary_coefficients
from .rng import RngStream

AR_BURN_IN = 512
INNOVATION_LAWS = ("normal", "student_t")


def sample_inverse_gamma(
    rng: RngStream,
    shape: float,
    scale: float,
    size: int | None = None,
) -> float | np.ndarray:
    """Draw from IG(shape, scale), density proportional to x^(-shape-1) exp(-scale/x)."""
    if not (np.isfinite(shape) and shape > 0):
        raise invalid_parameter(f"inverse gamma shape must be > 0, got {shape}")
    if not (np.isfinite(scale) and scale > 0):
        raise invalid_parameter(f"inverse gamma scale must be > 0, got {scale}")
    gamma_draw = rng.generator.gamma(shape, 1.0, size=size)
    if size is None:
        return float(scale / gamma_draw)
    return scale / gamma_draw


def sample_mvn(rng: RngStream, mean: np.ndarray, chol_of_cov: np.ndarray) -> np.ndarray:
    """Return ``mean + L z`` with ``z`` iid standard normal."""
    mean = np.asarray(mean, dtype=float).reshape(-1)
    factor = np.asarray(chol_of_cov, dtype=float)
    if factor.ndim != 2 or factor.shape != (mean.shape[0], mean.shape[0]):
        raise dimension_mismatch(
            f"covariance factor shape {factor.shape} does not match mean length {mean.shape[0]}"
        )
    return mean + factor @ rng.standard_normal(mean.shape[0])


def sample_poisson(rng: RngStream, rate: float | np.ndarray) -> int | np.ndarray:
    rates = np.asarray(rate, dtype=float)
    if np.any(~np.isfinite(rates)) or np.any(rates < 0):
        raise invalid_parameter(f"poisson rate must be finite and >= 0, got {rate}")
    draws = rng.generator.poisson(rates)
    if rates.ndim == 0:
        return int(draws)
    return draws.astype(np.int64)


def sample_student_t(rng: RngStream, df: float, size: int) -> np.ndarray:
    """Student-t as normal / sqrt(chi2_df / df)."""
    if not df > 0:
        raise invalid_parameter(f"degrees of freedom must be > 0, got {df}")
    normal = rng.standard_normal(size)
    chi2 = rng.generator.chisquare(df, size=size)
    return normal / np.sqrt(chi2 / df)


@dataclass(frozen=True)
class InnovationSpec:
    law: str = "normal"
    scale: float = 1.0
    df: float = 5.0

    def draw(self, rng: RngStream, size: int) -> np.ndarray:
        if self.law not in INNOVATION_LAWS:
            raise invalid_parameter(f"unknown innovation law {self.law!r}; expected one of {INNOVATION_LAWS}")
        if self.scale < 0:
            raise invalid_parameter(f"innovation scale must be >= 0, got {self.scale}")
        if self.law == "student_t":
            return self.scale * sample_student_t(rng, self.df, size)
        return self.scale * rng.standard_normal(size)

    def variance(self) -> float:
        if self.law == "student_t":
            return self.scale**2 * self.df / (self.df - 2.0) if self.df > 2 else float("inf")
        return self.scale**2


def is_stationary(coeffs: Sequence[float]) -> bool:
    coeffs = np.asarray(coeffs, dtype=float).reshape(-1)
    if coeffs.size == 0:
        return True
    companion = np.zeros((coeffs.size, coeffs.size))
    companion[0, :] = coeffs
    companion[1:, :-1] = np.eye(coeffs.size - 1)
    # roots of 1 - a1 z - ... - ap z^p outside the unit circle
    return bool(np.max(np.abs(np.linalg.eigvals(companion))) < 1.0)


def simulate_ar(
    rng: RngStream,
    coeffs: Sequence[float],
    innovations: InnovationSpec,
    n_obs: int,
    *,
    burn_in: int = AR_BURN_IN,
) -> np.ndarray:
    """Stationary AR(p) path of length ``n_obs``; the first ``burn_in`` values are discarded."""
    if n_obs < 1:
        raise invalid_parameter(f"path length must be >= 1, got {n_obs}")
    coeffs = np.asarray(coeffs, dtype=float).reshape(-1)
    if not is_stationary(coeffs):
        raise non_stationary_coefficients(f"AR coefficients {coeffs.tolist()} are not stationary")
    if coeffs.size == 0:
        return innovations.draw(rng, n_obs)
    shocks = innovations.draw(rng, n_obs + burn_in)
    path = lfilter([1.0], np.concatenate(([1.0], -coeffs)), shocks)
    return path[burn_in:]
