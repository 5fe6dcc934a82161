from __future__ import annotations

import os
from dataclasses import asdict, dataclass, field
from typing import Any

from .errors import validation_error

DEFAULT_PHI_GRID: tuple[float, ...] = (0.01, 0.1, 0.25, 0.5, 1.0, 1.5, 3.0)
LOGLIK_MODES = ("posterior_mean", "mean_of_draws")


def _default_threads() -> int:
    return max(1, os.cpu_count() or 1)


@dataclass(frozen=True)
class ModelConfig:
    prior_shape: float = 3.0
    prior_scale: float = 1.0

    phi: float = 0.25
    phi_grid: tuple[float, ...] = DEFAULT_PHI_GRID

    n_chains: int = 4
    gr_threshold: float = 1.5
    gr_check_interval: int = 100
    max_burn_sweeps: int = 50000
    thin: int = 20
    posterior_size: int = 1000
    init_jitter_sd: float = 0.5

    seed: int = 20240101
    threads: int = field(default_factory=_default_threads)

    interval_level: float = 0.95
    tail_mass: float = 1e-8
    loglik_mode: str = "posterior_mean"

    def violations(self) -> list[str]:
        problems: list[str] = []
        if not self.prior_shape > 2:
            problems.append(f"prior_shape must be > 2 (got {self.prior_shape})")
        if not self.prior_scale > 0:
            problems.append(f"prior_scale must be > 0 (got {self.prior_scale})")
        if not self.phi > 0:
            problems.append(f"phi must be > 0 (got {self.phi})")
        if not self.phi_grid:
            problems.append("phi_grid must not be empty")
        elif any(not value > 0 for value in self.phi_grid):
            problems.append(f"phi_grid values must be > 0 (got {list(self.phi_grid)})")
        if self.n_chains < 2:
            problems.append(f"n_chains must be >= 2 (got {self.n_chains})")
        if self.gr_check_interval < 20:
            problems.append(f"gr_check_interval must be >= 20 (got {self.gr_check_interval})")
        if self.max_burn_sweeps < self.gr_check_interval:
            problems.append("max_burn_sweeps must be >= gr_check_interval")
        if self.thin <= 10:
            problems.append(f"thin must be > 10 (got {self.thin})")
        if self.posterior_size < 1:
            problems.append(f"posterior_size must be >= 1 (got {self.posterior_size})")
        if self.seed < 0:
            problems.append(f"seed must be unsigned (got {self.seed})")
        if self.threads < 1:
            problems.append(f"threads must be >= 1 (got {self.threads})")
        if not 0.0 < self.interval_level < 1.0:
            problems.append(f"interval_level must be in (0, 1) (got {self.interval_level})")
        if not 0.0 < self.tail_mass < 1e-2:
            problems.append(f"tail_mass must be in (0, 0.01) (got {self.tail_mass})")
        if self.init_jitter_sd < 0:
            problems.append(f"init_jitter_sd must be >= 0 (got {self.init_jitter_sd})")
        if self.loglik_mode not in LOGLIK_MODES:
            problems.append(f"loglik_mode must be one of {LOGLIK_MODES} (got {self.loglik_mode!r})")
        return problems

    def require_valid(self) -> "ModelConfig":
        problems = self.violations()
        if problems:
            raise validation_error("invalid model config: " + "; ".join(problems), violations=problems)
        return self

    def snapshot(self) -> dict[str, Any]:
        payload = asdict(self)
        payload["phi_grid"] = list(self.phi_grid)
        payload.pop("threads", None)
        return payload
