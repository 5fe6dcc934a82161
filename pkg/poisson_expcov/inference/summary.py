from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..shared.errors import empty_posterior, invalid_parameter
from ..shared.series import PosteriorSamples


@dataclass(frozen=True)
class CoefficientSummary:
    name: str
    mean: float
    sd: float
    lo: float
    hi: float

    def as_row(self) -> dict[str, float | str]:
        return {"coefficient": self.name, "mean": self.mean, "sd": self.sd, "lo": self.lo, "hi": self.hi}


@dataclass(frozen=True)
class PosteriorSummary:
    rows: tuple[CoefficientSummary, ...]
    level: float
    variance_share: float

    def row(self, name: str) -> CoefficientSummary:
        for row in self.rows:
            if row.name == name:
                return row
        raise KeyError(name)

    @property
    def beta_mean(self) -> np.ndarray:
        return np.array([row.mean for row in self.rows if row.name.startswith("beta[")])


def _summarize(name: str, values: np.ndarray, level: float) -> CoefficientSummary:
    tail = 0.5 * (1.0 - level)
    lo, hi = np.quantile(values, [tail, 1.0 - tail])
    sd = float(np.std(values, ddof=1)) if values.shape[0] > 1 else 0.0
    return CoefficientSummary(name=name, mean=float(np.mean(values)), sd=sd, lo=float(lo), hi=float(hi))


def summarize_posterior(samples: PosteriorSamples, level: float = 0.95) -> PosteriorSummary:
    """Mean, sd and equal-tailed interval of every beta, sigma2 and sigmaw2.

    ``variance_share`` is the posterior mean of ``sigmaw2 / (sigma2 + sigmaw2)``,
    the part of the log-intensity variance carried by the correlated process.
    """
    if len(samples) == 0:
        raise empty_posterior("no posterior draws to summarize")
    if not 0.0 < level < 1.0:
        raise invalid_parameter(f"level must be in (0, 1), got {level}")
    betas = samples.beta_matrix()
    names = samples.coef_names or tuple(f"x{j}" for j in range(betas.shape[1]))
    sigma2 = samples.sigma2_vector()
    sigmaw2 = samples.sigmaw2_vector()

    rows = [_summarize(f"beta[{name}]", betas[:, j], level) for j, name in enumerate(names)]
    rows.append(_summarize("sigma2", sigma2, level))
    rows.append(_summarize("sigmaw2", sigmaw2, level))
    return PosteriorSummary(
        rows=tuple(rows),
        level=level,
        variance_share=float(np.mean(sigmaw2 / (sigma2 + sigmaw2))),
    )
