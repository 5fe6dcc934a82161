"""Domain value objects shared by the sampler, forecaster and CLI."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import dimension_mismatch, validation_error


def _frozen_array(values: object, *, dtype: type = float) -> np.ndarray:
    array = np.array(values, dtype=dtype, copy=True)
    array.setflags(write=False)
    return array


@dataclass(frozen=True)
class TimeIndex:
    times: np.ndarray

    def __post_init__(self) -> None:
        object.__setattr__(self, "times", _frozen_array(self.times).reshape(-1))

    def __len__(self) -> int:
        return int(self.times.shape[0])

    @property
    def last(self) -> float:
        return float(self.times[-1])

    def distances(self) -> np.ndarray:
        return np.abs(self.times[:, None] - self.times[None, :])

    def violations(self) -> list[str]:
        problems: list[str] = []
        if len(self) < 2:
            problems.append("time index needs at least 2 points")
        if not np.all(np.isfinite(self.times)):
            problems.append("times must be finite")
        elif len(self) >= 2 and not np.all(np.diff(self.times) > 0):
            problems.append("times not strictly increasing")
        return problems

    def head(self, n: int) -> "TimeIndex":
        return TimeIndex(self.times[:n])


@dataclass(frozen=True)
class ObservedSeries:
    index: TimeIndex
    counts: np.ndarray
    design: np.ndarray
    covariate_names: tuple[str, ...] = ()

    def __post_init__(self) -> None:
        counts = np.asarray(self.counts)
        if counts.size and not np.all(np.equal(np.mod(counts, 1), 0)):
            raise validation_error("counts must be integer valued")
        object.__setattr__(self, "counts", _frozen_array(counts, dtype=np.int64).reshape(-1))
        design = np.array(self.design, dtype=float, copy=True)
        if design.ndim == 1:
            design = design.reshape(-1, 1)
        design.setflags(write=False)
        object.__setattr__(self, "design", design)
        names = tuple(self.covariate_names) or tuple(f"x{j}" for j in range(design.shape[1]))
        if len(names) != design.shape[1]:
            raise dimension_mismatch(
                f"covariate_names has {len(names)} entries, design has {design.shape[1]} columns"
            )
        object.__setattr__(self, "covariate_names", names)

    @property
    def n_obs(self) -> int:
        return len(self.index)

    @property
    def n_coef(self) -> int:
        return int(self.design.shape[1])

    @property
    def times(self) -> np.ndarray:
        return self.index.times

    def split(self, n_train: int) -> tuple["ObservedSeries", "ObservedSeries"]:
        if not 0 < n_train < self.n_obs:
            raise validation_error(f"split point {n_train} outside 1..{self.n_obs - 1}")
        head = ObservedSeries(
            index=TimeIndex(self.times[:n_train]),
            counts=self.counts[:n_train],
            design=self.design[:n_train],
            covariate_names=self.covariate_names,
        )
        tail = ObservedSeries(
            index=TimeIndex(self.times[n_train:]),
            counts=self.counts[n_train:],
            design=self.design[n_train:],
            covariate_names=self.covariate_names,
        )
        return head, tail


def validate_series(series: ObservedSeries) -> list[str]:
    problems = list(series.index.violations())
    n_obs = series.n_obs
    if series.counts.shape[0] != n_obs:
        problems.append(f"counts length {series.counts.shape[0]} != time index length {n_obs}")
    if series.design.shape[0] != n_obs:
        problems.append(f"design rows {series.design.shape[0]} != time index length {n_obs}")
    if series.counts.size and np.any(series.counts < 0):
        problems.append("negative counts")
    if not np.all(np.isfinite(series.design)):
        problems.append("design contains non-finite values")
    elif series.n_coef > series.design.shape[0]:
        problems.append("design has more columns than rows")
    elif np.linalg.matrix_rank(series.design) < series.n_coef:
        problems.append("design rank-deficient")
    return problems


def require_valid_series(series: ObservedSeries) -> ObservedSeries:
    problems = validate_series(series)
    if problems:
        raise validation_error("invalid series: " + "; ".join(problems), violations=problems)
    return series


@dataclass(frozen=True)
class ChainState:
    beta: np.ndarray
    sigma2: float
    sigmaw2: float
    w: np.ndarray
    mu: np.ndarray

    def __post_init__(self) -> None:
        object.__setattr__(self, "beta", _frozen_array(self.beta).reshape(-1))
        object.__setattr__(self, "w", _frozen_array(self.w).reshape(-1))
        object.__setattr__(self, "mu", _frozen_array(self.mu).reshape(-1))
        object.__setattr__(self, "sigma2", float(self.sigma2))
        object.__setattr__(self, "sigmaw2", float(self.sigmaw2))

    def violations(self, series: ObservedSeries | None = None) -> list[str]:
        problems: list[str] = []
        if not self.sigma2 > 0:
            problems.append("sigma2 must be > 0")
        if not self.sigmaw2 > 0:
            problems.append("sigmaw2 must be > 0")
        if self.w.shape != self.mu.shape:
            problems.append("w and mu lengths differ")
        if series is not None:
            if self.beta.shape[0] != series.n_coef:
                problems.append(f"beta length {self.beta.shape[0]} != {series.n_coef}")
            if self.w.shape[0] != series.n_obs:
                problems.append(f"w length {self.w.shape[0]} != {series.n_obs}")
        return problems


@dataclass(frozen=True)
class PosteriorSamples:
    draws: tuple[ChainState, ...]
    phi_used: float
    burn_sweeps_used: int
    gr_history: tuple[tuple[int, float], ...] = ()
    chain_ids: tuple[int, ...] = ()
    thin: int = 0
    coef_names: tuple[str, ...] = ()

    def __post_init__(self) -> None:
        object.__setattr__(self, "draws", tuple(self.draws))
        object.__setattr__(self, "gr_history", tuple((int(s), float(v)) for s, v in self.gr_history))
        object.__setattr__(self, "chain_ids", tuple(int(c) for c in self.chain_ids))

    def __len__(self) -> int:
        return len(self.draws)

    def beta_matrix(self) -> np.ndarray:
        return np.vstack([draw.beta for draw in self.draws])

    def sigma2_vector(self) -> np.ndarray:
        return np.array([draw.sigma2 for draw in self.draws], dtype=float)

    def sigmaw2_vector(self) -> np.ndarray:
        return np.array([draw.sigmaw2 for draw in self.draws], dtype=float)

    def w_matrix(self) -> np.ndarray:
        return np.vstack([draw.w for draw in self.draws])

    def mu_matrix(self) -> np.ndarray:
        return np.vstack([draw.mu for draw in self.draws])
