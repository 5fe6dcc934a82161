"""CSV ingestion and result tables.

Input files carry a ``time`` column, a ``y`` count column (optional for future
rows) and any number of numeric covariate columns. Result tables are plain CSV
preceded by one ``# {json}`` manifest line.
"""

from __future__ import annotations

import io
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Iterable

import numpy as np
import pandas as pd

from poisson_expcov.shared.errors import io_error, parse_error, schema_error
from poisson_expcov.shared.series import ChainState, ObservedSeries, PosteriorSamples, TimeIndex, require_valid_series

from .manifest import RunManifest

TIME_COLUMN = "time"
COUNT_COLUMN = "y"
INTERCEPT_NAME = "intercept"
TREND_NAME = "trend"
# header line is line 1 and the manifest-free data start on line 2
_FIRST_DATA_LINE = 2


@dataclass(frozen=True)
class IngestOptions:
    intercept: bool = True
    trend: bool = False
    season_col: str | None = None

    def as_dict(self) -> dict[str, Any]:
        return {"intercept": self.intercept, "trend": self.trend, "season_col": self.season_col}


@dataclass(frozen=True)
class DesignSpec:
    """Column recipe learned from the training file and replayed on future rows."""

    options: IngestOptions
    covariates: tuple[str, ...] = ()
    season_levels: tuple[str, ...] = ()
    n_train: int = 0
    names: tuple[str, ...] = field(default=())

    @property
    def season_reference(self) -> str | None:
        return self.season_levels[-1] if self.season_levels else None

    def has_free_covariates(self) -> bool:
        return bool(self.covariates or self.season_levels)


def _read_frame(path: Path) -> pd.DataFrame:
    try:
        frame = pd.read_csv(path, float_precision="round_trip", dtype={TIME_COLUMN: str, COUNT_COLUMN: str})
    except FileNotFoundError as exc:
        raise io_error(f"input file not found: {path}", path=str(path)) from exc
    except OSError as exc:
        raise io_error(f"cannot read {path}: {exc}", path=str(path)) from exc
    except (pd.errors.ParserError, pd.errors.EmptyDataError, UnicodeDecodeError) as exc:
        raise parse_error(f"cannot parse {path}: {exc}", path=str(path)) from exc
    frame.columns = [str(column).strip() for column in frame.columns]
    if TIME_COLUMN not in frame.columns:
        raise schema_error(f"{path} has no '{TIME_COLUMN}' column", path=str(path), columns=list(frame.columns))
    return frame


def _numeric_column(frame: pd.DataFrame, column: str, path: Path) -> np.ndarray:
    values = pd.to_numeric(frame[column], errors="coerce")
    bad = np.flatnonzero(values.isna().to_numpy())
    if bad.size:
        row = int(bad[0]) + _FIRST_DATA_LINE
        raise parse_error(
            f"{path}: line {row}, column '{column}': not a number ({frame[column].iloc[bad[0]]!r})",
            path=str(path),
            line=row,
            column=column,
        )
    return values.to_numpy(dtype=float)


def _count_column(frame: pd.DataFrame, path: Path) -> np.ndarray:
    values = _numeric_column(frame, COUNT_COLUMN, path)
    for position, value in enumerate(values):
        if value < 0 or not float(value).is_integer():
            row = position + _FIRST_DATA_LINE
            raise parse_error(
                f"{path}: line {row}, column '{COUNT_COLUMN}': expected a non-negative integer count, "
                f"got {frame[COUNT_COLUMN].iloc[position]!r}",
                path=str(path),
                line=row,
                column=COUNT_COLUMN,
            )
    return values.astype(np.int64)


def _level_sort_key(level: str) -> tuple[int, float, str]:
    try:
        return (0, float(level), level)
    except ValueError:
        return (1, 0.0, level)


def _season_labels(frame: pd.DataFrame, column: str) -> list[str]:
    labels = []
    for value in frame[column].tolist():
        if isinstance(value, float) and value.is_integer():
            value = int(value)
        labels.append(str(value).strip())
    return labels


def _design_matrix(
    frame: pd.DataFrame,
    spec: DesignSpec,
    path: Path,
    trend_start: int,
) -> tuple[np.ndarray, tuple[str, ...]]:
    n_rows = len(frame)
    columns: list[np.ndarray] = []
    names: list[str] = []
    if spec.options.intercept:
        columns.append(np.ones(n_rows))
        names.append(INTERCEPT_NAME)
    if spec.options.trend:
        columns.append(np.arange(trend_start, trend_start + n_rows, dtype=float))
        names.append(TREND_NAME)
    for covariate in spec.covariates:
        if covariate not in frame.columns:
            raise schema_error(f"{path} is missing covariate column '{covariate}'", path=str(path), column=covariate)
        columns.append(_numeric_column(frame, covariate, path))
        names.append(covariate)
    if spec.season_levels:
        column = spec.options.season_col or ""
        if column not in frame.columns:
            raise schema_error(f"{path} is missing season column '{column}'", path=str(path), column=column)
        labels = _season_labels(frame, column)
        unknown = sorted(set(labels) - set(spec.season_levels), key=_level_sort_key)
        if unknown:
            raise schema_error(f"{path}: unseen levels {unknown} in season column '{column}'", path=str(path))
        for level in spec.season_levels[:-1]:
            columns.append(np.array([1.0 if label == level else 0.0 for label in labels]))
            names.append(f"{column}_{level}")
    if not columns:
        raise schema_error("design has no columns: enable the intercept or add covariates")
    return np.column_stack(columns), tuple(names)


def learn_design(frame: pd.DataFrame, options: IngestOptions, path: Path) -> DesignSpec:
    reserved = {TIME_COLUMN, COUNT_COLUMN}
    if options.season_col is not None:
        if options.season_col not in frame.columns:
            raise schema_error(f"{path} has no season column '{options.season_col}'", path=str(path))
        reserved.add(options.season_col)
    covariates = tuple(column for column in frame.columns if column not in reserved)
    levels: tuple[str, ...] = ()
    if options.season_col is not None:
        levels = tuple(sorted(set(_season_labels(frame, options.season_col)), key=_level_sort_key))
        if len(levels) < 2:
            raise schema_error(f"season column '{options.season_col}' needs at least two levels")
    return DesignSpec(options=options, covariates=covariates, season_levels=levels, n_train=len(frame))


def ingest_csv(path: Path, options: IngestOptions | None = None) -> tuple[ObservedSeries, DesignSpec]:
    """Read a training file into a validated series plus the design recipe used to build it."""
    path = Path(path)
    options = options or IngestOptions()
    frame = _read_frame(path)
    if COUNT_COLUMN not in frame.columns:
        raise schema_error(f"{path} has no '{COUNT_COLUMN}' column", path=str(path), columns=list(frame.columns))
    times = _numeric_column(frame, TIME_COLUMN, path)
    counts = _count_column(frame, path)
    spec = learn_design(frame, options, path)
    design, names = _design_matrix(frame, spec, path, trend_start=1)
    spec = DesignSpec(
        options=options,
        covariates=spec.covariates,
        season_levels=spec.season_levels,
        n_train=len(frame),
        names=names,
    )
    series = ObservedSeries(index=TimeIndex(times), counts=counts, design=design, covariate_names=names)
    require_valid_series(series)
    logging.info("ingested series: path=%s rows=%s columns=%s", path, series.n_obs, list(names))
    return series, spec


def ingest_future_csv(path: Path, spec: DesignSpec) -> tuple[np.ndarray, np.ndarray, np.ndarray | None]:
    """Future rows: times, design built with the training recipe, and counts when a ``y`` column is present."""
    path = Path(path)
    frame = _read_frame(path)
    times = _numeric_column(frame, TIME_COLUMN, path)
    design, names = _design_matrix(frame, spec, path, trend_start=spec.n_train + 1)
    if names != spec.names:
        raise schema_error(f"{path} builds columns {list(names)}, training used {list(spec.names)}")
    counts = _count_column(frame, path) if COUNT_COLUMN in frame.columns else None
    return times, design, counts


def horizon_design(spec: DesignSpec, times: np.ndarray) -> np.ndarray:
    """Design rows for future times when the model has only intercept and trend columns."""
    if spec.has_free_covariates():
        raise schema_error(
            "a bare horizon needs future covariate values; pass a future CSV instead",
            covariates=list(spec.covariates),
            season_levels=list(spec.season_levels),
        )
    frame = pd.DataFrame({TIME_COLUMN: np.asarray(times, dtype=float)})
    design, _ = _design_matrix(frame, spec, Path("<horizon>"), trend_start=spec.n_train + 1)
    return design


def read_truth_csv(path: Path) -> tuple[np.ndarray, np.ndarray]:
    path = Path(path)
    frame = _read_frame(path)
    if COUNT_COLUMN not in frame.columns:
        raise schema_error(f"{path} has no '{COUNT_COLUMN}' column", path=str(path))
    return _numeric_column(frame, TIME_COLUMN, path), _count_column(frame, path)


def write_table(path: Path, frame: pd.DataFrame, manifest: RunManifest) -> Path:
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        with path.open("w", encoding="utf-8", newline="") as handle:
            handle.write(manifest.to_line() + "\n")
            frame.to_csv(handle, index=False, lineterminator="\n")
    except OSError as exc:
        raise io_error(f"cannot write {path}: {exc}", path=str(path)) from exc
    return path


def read_table(path: Path) -> tuple[RunManifest, pd.DataFrame]:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise io_error(f"cannot read {path}: {exc}", path=str(path)) from exc
    first, _, body = text.partition("\n")
    manifest = RunManifest.from_line(first)
    try:
        frame = pd.read_csv(io.StringIO(body), float_precision="round_trip")
    except (pd.errors.ParserError, pd.errors.EmptyDataError) as exc:
        raise parse_error(f"cannot parse {path}: {exc}", path=str(path)) from exc
    return manifest, frame


def draws_frame(samples: PosteriorSamples, n_obs: int) -> pd.DataFrame:
    names = samples.coef_names or tuple(f"x{j}" for j in range(samples.beta_matrix().shape[1]))
    data: dict[str, Any] = {
        "draw": np.arange(len(samples)),
        "chain": np.asarray(samples.chain_ids, dtype=np.int64),
    }
    betas = samples.beta_matrix()
    for j, name in enumerate(names):
        data[f"beta[{name}]"] = betas[:, j]
    data["sigma2"] = samples.sigma2_vector()
    data["sigmaw2"] = samples.sigmaw2_vector()
    w, mu = samples.w_matrix(), samples.mu_matrix()
    for t in range(n_obs):
        data[f"w[{t + 1}]"] = w[:, t]
    for t in range(n_obs):
        data[f"mu[{t + 1}]"] = mu[:, t]
    return pd.DataFrame(data)


def _columns(frame: pd.DataFrame, names: Iterable[str], path: Path) -> np.ndarray:
    names = list(names)
    missing = [name for name in names if name not in frame.columns]
    if missing:
        raise schema_error(f"{path} is missing draw columns {missing[:5]}", path=str(path))
    return frame[names].to_numpy(dtype=float)


def samples_from_frame(
    frame: pd.DataFrame,
    manifest: RunManifest,
    coef_names: tuple[str, ...],
    n_obs: int,
    path: Path,
) -> PosteriorSamples:
    betas = _columns(frame, [f"beta[{name}]" for name in coef_names], path)
    sigma2 = _columns(frame, ["sigma2"], path)[:, 0]
    sigmaw2 = _columns(frame, ["sigmaw2"], path)[:, 0]
    w = _columns(frame, [f"w[{t + 1}]" for t in range(n_obs)], path)
    mu = _columns(frame, [f"mu[{t + 1}]" for t in range(n_obs)], path)
    draws = tuple(
        ChainState(beta=betas[s], sigma2=sigma2[s], sigmaw2=sigmaw2[s], w=w[s], mu=mu[s]) for s in range(len(frame))
    )
    extra = manifest.extra
    return PosteriorSamples(
        draws=draws,
        phi_used=float(extra["phi"]),
        burn_sweeps_used=int(extra.get("burn_sweeps", 0)),
        gr_history=tuple(tuple(item) for item in extra.get("gr_history", ())),
        chain_ids=tuple(int(c) for c in frame["chain"]) if "chain" in frame.columns else (),
        thin=int(extra.get("thin", 0)),
        coef_names=coef_names,
    )
