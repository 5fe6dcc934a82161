from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from ..shared.errors import insufficient_data

MIN_TRACE_LENGTH = 10


@dataclass(frozen=True)
class GelmanRubinReport:
    factors: dict[str, float]
    max_stat: float
    sweep: int

    def converged(self, threshold: float) -> bool:
        return self.max_stat < threshold


def gelman_rubin(chains: Sequence[Sequence[float]] | np.ndarray) -> float:
    """Potential scale reduction factor for one scalar traced over several chains.

    ``chains`` is ``(n_chains, length)``. Rounding can push the pooled estimate
    a hair below ``W``; the factor is floored at 1.
    """
    traces = np.asarray(chains, dtype=float)
    if traces.ndim != 2 or traces.shape[0] < 2:
        raise insufficient_data(f"need at least 2 chains, got shape {traces.shape}")
    length = traces.shape[1]
    if length < MIN_TRACE_LENGTH:
        raise insufficient_data(f"need at least {MIN_TRACE_LENGTH} values per chain, got {length}")

    within = float(np.mean(np.var(traces, axis=1, ddof=1)))
    between_over_length = float(np.var(np.mean(traces, axis=1), ddof=1))
    if within <= 0.0:
        return 1.0 if between_over_length <= 0.0 else float("inf")
    pooled = (length - 1) / length * within + between_over_length
    return float(max(1.0, np.sqrt(pooled / within)))


def gelman_rubin_report(traces: dict[str, np.ndarray], sweep: int) -> GelmanRubinReport:
    factors = {name: gelman_rubin(values) for name, values in traces.items()}
    return GelmanRubinReport(factors=factors, max_stat=max(factors.values()), sweep=int(sweep))
