from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
from scipy import linalg

from ..shared.errors import cholesky_failure, dimension_mismatch, invalid_parameter, validation_error
from ..shared.series import TimeIndex

CHOLESKY_JITTER = 1e-10


@dataclass(frozen=True)
class CorrelationFactor:
    """Exponential correlation ``exp(-phi |t_i - t_j|)`` with its Cholesky and eigen factors."""

    phi: float
    index: TimeIndex
    matrix: np.ndarray
    chol: np.ndarray
    logdet: float
    eigvals: np.ndarray
    eigvecs: np.ndarray
    jittered: bool = False

    @property
    def size(self) -> int:
        return len(self.index)

    def check_length(self, vector: np.ndarray, name: str = "vector") -> np.ndarray:
        vector = np.asarray(vector, dtype=float).reshape(-1)
        if vector.shape[0] != self.size:
            raise dimension_mismatch(f"{name} has length {vector.shape[0]}, correlation is {self.size}x{self.size}")
        return vector


def correlation_matrix(times: np.ndarray, phi: float) -> np.ndarray:
    times = np.asarray(times, dtype=float).reshape(-1)
    return np.exp(-phi * np.abs(times[:, None] - times[None, :]))


def build_correlation(index: TimeIndex, phi: float) -> CorrelationFactor:
    if not (np.isfinite(phi) and phi > 0):
        raise invalid_parameter(f"phi must be > 0, got {phi}")
    problems = index.violations()
    if problems:
        raise validation_error("invalid time index: " + "; ".join(problems), violations=problems)

    matrix = correlation_matrix(index.times, phi)
    jittered = False
    try:
        chol = linalg.cholesky(matrix, lower=True)
    except linalg.LinAlgError:
        logging.warning("correlation cholesky failed, retrying with jitter: phi=%s size=%s", phi, len(index))
        matrix = matrix + CHOLESKY_JITTER * np.eye(len(index))
        jittered = True
        try:
            chol = linalg.cholesky(matrix, lower=True)
        except linalg.LinAlgError as exc:
            raise cholesky_failure(
                f"correlation matrix not positive definite for phi={phi} (near-duplicate times?)",
                phi=phi,
            ) from exc
    pivots = np.diag(chol)
    if np.any(pivots <= 0) or not np.all(np.isfinite(pivots)):
        raise cholesky_failure(f"non-positive cholesky pivot for phi={phi}", phi=phi)

    eigvals, eigvecs = linalg.eigh(matrix)
    # tiny negative eigenvalues are rounding noise on a positive definite matrix
    eigvals = np.maximum(eigvals, np.finfo(float).tiny)
    for array in (matrix, chol, eigvals, eigvecs):
        array.setflags(write=False)
    return CorrelationFactor(
        phi=float(phi),
        index=index,
        matrix=matrix,
        chol=chol,
        logdet=float(2.0 * np.sum(np.log(pivots))),
        eigvals=eigvals,
        eigvecs=eigvecs,
        jittered=jittered,
    )


def solve(factor: CorrelationFactor, v: np.ndarray) -> np.ndarray:
    """``Sigma_w^{-1} v``."""
    v = factor.check_length(v, "v")
    return linalg.cho_solve((factor.chol, True), v)


def quadratic_form(factor: CorrelationFactor, w: np.ndarray) -> float:
    """``w' Sigma_w^{-1} w`` as ``||L^{-1} w||^2``."""
    w = factor.check_length(w, "w")
    whitened = linalg.solve_triangular(factor.chol, w, lower=True)
    return float(whitened @ whitened)


def cross_correlation(index: TimeIndex, phi: float, t_new: float) -> np.ndarray:
    if not phi > 0:
        raise invalid_parameter(f"phi must be > 0, got {phi}")
    return np.exp(-phi * np.abs(index.times - float(t_new)))
