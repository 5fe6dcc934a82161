"""Adaptive rejection Metropolis sampling.

The sampler is batched: an :class:`ArmsTarget` describes ``R`` independent
univariate targets (one per row) that share an evaluator, and one call to
:func:`sample_arms` advances every row by one ARMS transition. The envelope is
the derivative-free one: on each interval between abscissae it is the maximum
of the chord and the minimum of the two neighbouring secant extensions, with
the outer secants extended into the tails. Rejected proposals are added to the
abscissae of their row, so every still-pending row carries the same number of
points.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy.special import logsumexp

from ..shared.errors import envelope_failure, invalid_parameter
from .rng import RngStream

LogDensity = Callable[[np.ndarray, np.ndarray], np.ndarray]

MAX_ROUNDS = 50
_FLAT_SLOPE = 1e-10
# exp() overflows past ~709.78; keep the mu domain below that
_EXP_CEILING = 700.0
_NEWTON_STEPS = 100


@dataclass(frozen=True)
class ArmsTarget:
    """``log_density(x, rows)`` returns the unnormalised log density of row ``rows[i]`` at ``x[i]``."""

    log_density: LogDensity
    lower: np.ndarray
    upper: np.ndarray
    abscissae: np.ndarray

    def __post_init__(self) -> None:
        abscissae = np.atleast_2d(np.asarray(self.abscissae, dtype=float))
        n_rows = abscissae.shape[0]
        object.__setattr__(self, "abscissae", abscissae)
        object.__setattr__(self, "lower", np.broadcast_to(np.asarray(self.lower, dtype=float), (n_rows,)).copy())
        object.__setattr__(self, "upper", np.broadcast_to(np.asarray(self.upper, dtype=float), (n_rows,)).copy())

    @classmethod
    def scalar(
        cls,
        log_density: Callable[[np.ndarray], np.ndarray],
        lower: float,
        upper: float,
        abscissae: np.ndarray | list[float],
    ) -> "ArmsTarget":
        """Single-row target from a numpy-vectorised ``log_density(x)``."""
        return cls(
            log_density=lambda x, rows: np.asarray(log_density(x), dtype=float),
            lower=np.array([lower], dtype=float),
            upper=np.array([upper], dtype=float),
            abscissae=np.asarray(abscissae, dtype=float).reshape(1, -1),
        )

    @property
    def n_rows(self) -> int:
        return int(self.abscissae.shape[0])

    def violations(self) -> list[str]:
        problems: list[str] = []
        if self.abscissae.shape[1] < 3:
            problems.append("need at least 3 initial abscissae")
        if not (np.all(np.isfinite(self.lower)) and np.all(np.isfinite(self.upper))):
            problems.append("domain bounds must be finite")
        elif np.any(self.lower >= self.upper):
            problems.append("lower bound must be below upper bound")
        if np.any(np.diff(self.abscissae, axis=1) <= 0):
            problems.append("abscissae not strictly increasing")
        if np.any(self.abscissae[:, 0] <= self.lower) or np.any(self.abscissae[:, -1] >= self.upper):
            problems.append("abscissae must lie inside the domain")
        return problems


@dataclass(frozen=True)
class _Envelope:
    starts: np.ndarray
    widths: np.ndarray
    start_values: np.ndarray
    slopes: np.ndarray
    log_masses: np.ndarray

    def value_at(self, x: np.ndarray) -> np.ndarray:
        piece = np.clip(np.sum(self.starts <= x[:, None], axis=1) - 1, 0, self.starts.shape[1] - 1)
        rows = np.arange(x.shape[0])
        return self.start_values[rows, piece] + self.slopes[rows, piece] * (x - self.starts[rows, piece])

    def draw(self, u_piece: np.ndarray, u_within: np.ndarray) -> np.ndarray:
        rows = np.arange(u_piece.shape[0])
        weights = np.exp(self.log_masses - logsumexp(self.log_masses, axis=1, keepdims=True))
        cdf = np.cumsum(weights, axis=1)
        piece = np.clip(np.sum(cdf < u_piece[:, None], axis=1), 0, cdf.shape[1] - 1)
        start = self.starts[rows, piece]
        width = self.widths[rows, piece]
        slope = self.slopes[rows, piece]
        scaled = slope * width
        with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
            rising = start + width + np.log(u_within + (1.0 - u_within) * np.exp(-scaled)) / slope
            falling = start + np.log1p(u_within * np.expm1(scaled)) / slope
        flat = start + u_within * width
        x = np.where(np.abs(scaled) < _FLAT_SLOPE, flat, np.where(scaled > 0, rising, falling))
        return np.clip(x, start, start + width)


def _piece_log_masses(start_values: np.ndarray, slopes: np.ndarray, widths: np.ndarray) -> np.ndarray:
    scaled = slopes * widths
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        flat = start_values + 0.5 * scaled + np.log(widths)
        rising = start_values + scaled + np.log(-np.expm1(-scaled)) - np.log(slopes)
        falling = start_values + np.log(-np.expm1(scaled)) - np.log(-slopes)
    return np.where(np.abs(scaled) < _FLAT_SLOPE, flat, np.where(scaled > 0, rising, falling))


def _line(slope: np.ndarray, anchor_x: np.ndarray, anchor_h: np.ndarray, at: np.ndarray) -> np.ndarray:
    return anchor_h + slope * (at - anchor_x)


def _intersection(
    slope_1: np.ndarray,
    x_1: np.ndarray,
    h_1: np.ndarray,
    slope_2: np.ndarray,
    x_2: np.ndarray,
    h_2: np.ndarray,
    lo: np.ndarray,
    hi: np.ndarray,
) -> np.ndarray:
    with np.errstate(divide="ignore", invalid="ignore"):
        crossing = (h_2 - h_1 + slope_1 * x_1 - slope_2 * x_2) / (slope_1 - slope_2)
    crossing = np.where(np.isfinite(crossing), crossing, lo)
    return np.clip(crossing, lo, hi)


def _build_envelope(x: np.ndarray, h: np.ndarray, lower: np.ndarray, upper: np.ndarray) -> _Envelope:
    n_rows = x.shape[0]
    xl, xr = x[:, :-1], x[:, 1:]
    hl, hr = h[:, :-1], h[:, 1:]
    chord = (hr - hl) / (xr - xl)

    # left secant L(i-1,i) anchored at x_i; first interval borrows the right one
    left_slope = np.concatenate([chord[:, 1:2], chord[:, :-1]], axis=1)
    left_x, left_h = xl.copy(), hl.copy()
    left_x[:, 0], left_h[:, 0] = xr[:, 1], hr[:, 1]
    # right secant L(i+1,i+2) anchored at x_{i+1}; last interval borrows the left one
    right_slope = np.concatenate([chord[:, 1:], chord[:, -2:-1]], axis=1)
    right_x, right_h = xr.copy(), hr.copy()
    right_x[:, -1], right_h[:, -1] = xl[:, -1], hl[:, -1]

    cuts = np.stack(
        [
            xl,
            _intersection(left_slope, left_x, left_h, right_slope, right_x, right_h, xl, xr),
            _intersection(chord, xl, hl, left_slope, left_x, left_h, xl, xr),
            _intersection(chord, xl, hl, right_slope, right_x, right_h, xl, xr),
            xr,
        ],
        axis=-1,
    )
    cuts = np.sort(cuts, axis=-1)
    sub_start, sub_end = cuts[..., :-1], cuts[..., 1:]
    mid = 0.5 * (sub_start + sub_end)

    def expand(values: np.ndarray) -> np.ndarray:
        return np.repeat(values[..., None], 4, axis=-1)

    chord_mid = _line(expand(chord), expand(xl), expand(hl), mid)
    left_mid = _line(expand(left_slope), expand(left_x), expand(left_h), mid)
    right_mid = _line(expand(right_slope), expand(right_x), expand(right_h), mid)
    use_chord = chord_mid >= np.minimum(left_mid, right_mid)
    use_left = ~use_chord & (left_mid <= right_mid)

    slope = np.where(use_chord, expand(chord), np.where(use_left, expand(left_slope), expand(right_slope)))
    anchor_x = np.where(use_chord, expand(xl), np.where(use_left, expand(left_x), expand(right_x)))
    anchor_h = np.where(use_chord, expand(hl), np.where(use_left, expand(left_h), expand(right_h)))
    start_value = _line(slope, anchor_x, anchor_h, sub_start)

    starts = np.concatenate([lower[:, None], sub_start.reshape(n_rows, -1), x[:, -1:]], axis=1)
    ends = np.concatenate([x[:, :1], sub_end.reshape(n_rows, -1), upper[:, None]], axis=1)
    slopes = np.concatenate([chord[:, :1], slope.reshape(n_rows, -1), chord[:, -1:]], axis=1)
    start_values = np.concatenate(
        [
            _line(chord[:, 0], x[:, 0], h[:, 0], lower)[:, None],
            start_value.reshape(n_rows, -1),
            h[:, -1:],
        ],
        axis=1,
    )
    widths = np.maximum(ends - starts, 0.0)
    return _Envelope(
        starts=starts,
        widths=widths,
        start_values=start_values,
        slopes=slopes,
        log_masses=_piece_log_masses(start_values, slopes, widths),
    )


def _evaluate(target: ArmsTarget, x: np.ndarray, rows: np.ndarray) -> np.ndarray:
    values = np.asarray(target.log_density(x, rows), dtype=float).reshape(x.shape)
    if not np.all(np.isfinite(values)):
        bad = np.flatnonzero(~np.isfinite(values))[:5]
        raise envelope_failure(
            "log density is not finite inside the domain",
            rows=[int(rows.reshape(-1)[i]) for i in bad],
            points=[float(x.reshape(-1)[i]) for i in bad],
        )
    return values


def _evaluate_grid(target: ArmsTarget, x: np.ndarray, rows: np.ndarray) -> np.ndarray:
    flat_rows = np.repeat(rows, x.shape[1])
    return _evaluate(target, x.reshape(-1), flat_rows).reshape(x.shape)


def sample_arms(rng: RngStream, target: ArmsTarget, current: float | np.ndarray) -> float | np.ndarray:
    """One ARMS transition per row of ``target``, started from ``current``."""
    problems = target.violations()
    if problems:
        raise invalid_parameter("invalid ARMS target: " + "; ".join(problems), violations=problems)
    scalar = np.ndim(current) == 0
    result = np.array(np.atleast_1d(current), dtype=float)
    if result.shape[0] != target.n_rows:
        raise invalid_parameter(f"current has {result.shape[0]} rows, target has {target.n_rows}")

    pending = np.arange(target.n_rows)
    x = target.abscissae.copy()
    h = _evaluate_grid(target, x, pending)
    lower, upper = target.lower.copy(), target.upper.copy()
    current_h = _evaluate(target, result, pending)

    for _round in range(MAX_ROUNDS):
        if pending.size == 0:
            break
        envelope = _build_envelope(x, h, lower, upper)
        u = rng.uniform(size=(4, pending.size))
        proposal = envelope.draw(u[0], u[1])
        proposal_h = _evaluate(target, proposal, pending)
        proposal_env = envelope.value_at(proposal)
        accepted = np.log(u[2]) <= proposal_h - proposal_env

        if np.any(accepted):
            current = result[pending]
            current_env = envelope.value_at(current)
            log_alpha = (
                proposal_h
                + np.minimum(current_h, current_env)
                - current_h
                - np.minimum(proposal_h, proposal_env)
            )
            moved = accepted & (np.log(u[3]) <= log_alpha)
            result[pending[moved]] = proposal[moved]

        rejected = ~accepted
        pending = pending[rejected]
        if pending.size == 0:
            break
        x, h = x[rejected], h[rejected]
        lower, upper = lower[rejected], upper[rejected]
        current_h = current_h[rejected]
        new_x, new_h = proposal[rejected], proposal_h[rejected]

        clash = np.any(x == new_x[:, None], axis=1)
        if np.any(clash):
            new_x = np.where(clash, np.nextafter(new_x, upper), new_x)
            new_h = np.where(clash, _evaluate(target, new_x, pending), new_h)

        x = np.concatenate([x, new_x[:, None]], axis=1)
        h = np.concatenate([h, new_h[:, None]], axis=1)
        order = np.argsort(x, axis=1, kind="stable")
        x = np.take_along_axis(x, order, axis=1)
        h = np.take_along_axis(h, order, axis=1)

    if pending.size:
        raise envelope_failure(f"envelope did not accept within {MAX_ROUNDS} rounds", rows=pending[:10].tolist())
    logging.debug("arms transition done: rows=%s abscissae=%s", target.n_rows, x.shape[1])
    return float(result[0]) if scalar else result


def _conditional_mode(linear: np.ndarray, counts: np.ndarray, sigma2: float) -> np.ndarray:
    # root of (a - x)/s2 + y - e^x; starts right of the root so Newton decreases monotonically
    gaussian_mode = linear + sigma2 * counts
    x = np.minimum(np.maximum(linear, np.log1p(counts)), gaussian_mode)
    for _ in range(_NEWTON_STEPS):
        grad = (linear - x) / sigma2 + counts - np.exp(x)
        step = grad / (1.0 / sigma2 + np.exp(x))
        x = x + step
        if np.max(np.abs(step)) < 1e-12:
            break
    return x


def mu_conditional_target(
    linear: np.ndarray,
    counts: np.ndarray,
    sigma2: float,
    current: np.ndarray | None = None,
) -> ArmsTarget:
    """Targets ``-(mu - (a + sigma2*y))^2 / (2 sigma2) - exp(mu)`` per time point, ``a = x'beta + w``.

    Abscissae sit at the conditional mode +-2 and +-4 curvature scales; the
    domain runs 30 sigma to the left and 30 curvature scales to the right,
    widened to keep ``current`` inside.
    """
    if not sigma2 > 0:
        raise invalid_parameter(f"sigma2 must be > 0, got {sigma2}")
    linear = np.asarray(linear, dtype=float).reshape(-1)
    counts = np.asarray(counts, dtype=float).reshape(-1)
    if linear.shape != counts.shape:
        raise invalid_parameter(f"linear predictor length {linear.shape[0]} != counts length {counts.shape[0]}")
    sigma = float(np.sqrt(sigma2))
    gaussian_mode = linear + sigma2 * counts
    mode = _conditional_mode(linear, counts, sigma2)
    scale = 1.0 / np.sqrt(1.0 / sigma2 + np.exp(mode))

    lower = mode - 30.0 * sigma
    upper = np.minimum(mode + 30.0 * scale, _EXP_CEILING)
    if current is not None:
        current = np.asarray(current, dtype=float).reshape(-1)
        lower = np.minimum(lower, current - scale)
        upper = np.maximum(upper, np.minimum(current + scale, _EXP_CEILING))

    abscissae = mode[:, None] + scale[:, None] * np.array([-4.0, -2.0, 0.0, 2.0, 4.0])

    def log_density(x: np.ndarray, rows: np.ndarray) -> np.ndarray:
        return -0.5 * (x - gaussian_mode[rows]) ** 2 / sigma2 - np.exp(x)

    return ArmsTarget(log_density=log_density, lower=lower, upper=upper, abscissae=abscissae)
