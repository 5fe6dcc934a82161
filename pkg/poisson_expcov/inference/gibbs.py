"""Gibbs sampler for the latent-process Poisson model.

One sweep draws sigma2 and sigmaw2 from their inverse-gamma conditionals,
beta from its normal conditional, the latent process w in the cached
eigenbasis of the correlation matrix, and finally every log-intensity mu_t by
ARMS. Several chains run side by side; every ``gr_check_interval`` sweeps they
meet at a barrier and the Gelman-Rubin statistic over the second half of the
burn-in traces decides whether to stop burning in.
"""

from __future__ import annotations

import contextvars
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Callable, Sequence

import numpy as np
from scipy import linalg

from ..sampling.arms import mu_conditional_target, sample_arms
from ..sampling.distributions import sample_inverse_gamma, sample_mvn
from ..sampling.rng import RngStream, StreamPart
from ..shared.errors import convergence_failure, dimension_mismatch, invalid_parameter
from ..shared.interfaces import ModelConfig
from ..shared.log_context import bind_context
from ..shared.series import ChainState, ObservedSeries, PosteriorSamples, require_valid_series
from .convergence import GelmanRubinReport, gelman_rubin_report
from .covariance import CorrelationFactor, quadratic_form

SWEEP_ORDER: tuple[str, ...] = ("sigma2", "sigmaw2", "beta", "w", "mu")


@dataclass(frozen=True)
class ConditionalContext:
    series: ObservedSeries
    factor: CorrelationFactor
    config: ModelConfig
    xtx: np.ndarray
    xtx_inv: np.ndarray
    xtx_inv_chol: np.ndarray
    projector: np.ndarray

    @classmethod
    def build(cls, series: ObservedSeries, factor: CorrelationFactor, config: ModelConfig) -> "ConditionalContext":
        require_valid_series(series)
        if factor.size != series.n_obs or not np.array_equal(factor.index.times, series.times):
            raise dimension_mismatch("correlation factor was built on a different time index")
        design = series.design
        xtx = design.T @ design
        xtx_inv = linalg.cho_solve(linalg.cho_factor(xtx, lower=True), np.eye(series.n_coef))
        xtx_inv = 0.5 * (xtx_inv + xtx_inv.T)
        return cls(
            series=series,
            factor=factor,
            config=config,
            xtx=xtx,
            xtx_inv=xtx_inv,
            xtx_inv_chol=linalg.cholesky(xtx_inv, lower=True),
            projector=xtx_inv @ design.T,
        )

    @property
    def n_obs(self) -> int:
        return self.series.n_obs

    def linear_predictor(self, beta: np.ndarray) -> np.ndarray:
        return self.series.design @ beta


def update_sigma2(rng: RngStream, ctx: ConditionalContext, state: ChainState) -> float:
    residual = state.mu - ctx.linear_predictor(state.beta) - state.w
    shape = ctx.config.prior_shape + 0.5 * ctx.n_obs
    scale = ctx.config.prior_scale + 0.5 * float(residual @ residual)
    return sample_inverse_gamma(rng, shape, scale)


def update_sigmaw2(rng: RngStream, ctx: ConditionalContext, state: ChainState) -> float:
    shape = ctx.config.prior_shape + 0.5 * ctx.n_obs
    scale = ctx.config.prior_scale + 0.5 * quadratic_form(ctx.factor, state.w)
    return sample_inverse_gamma(rng, shape, scale)


def update_beta(rng: RngStream, ctx: ConditionalContext, state: ChainState) -> np.ndarray:
    mean = ctx.projector @ (state.mu - state.w)
    return sample_mvn(rng, mean, math.sqrt(state.sigma2) * ctx.xtx_inv_chol)


def _w_eigen_moments(ctx: ConditionalContext, state: ChainState) -> tuple[np.ndarray, np.ndarray]:
    # covariance is Q diag(shrink) Q', mean is that covariance times the residual over sigma2
    shrink = 1.0 / (1.0 / state.sigma2 + 1.0 / (state.sigmaw2 * ctx.factor.eigvals))
    q = ctx.factor.eigvecs
    residual = state.mu - ctx.linear_predictor(state.beta)
    return q @ (shrink * (q.T @ residual)) / state.sigma2, shrink


def w_conditional_moments(ctx: ConditionalContext, state: ChainState) -> tuple[np.ndarray, np.ndarray]:
    """Mean and covariance of w given the rest."""
    mean, shrink = _w_eigen_moments(ctx, state)
    q = ctx.factor.eigvecs
    return mean, (q * shrink) @ q.T


def update_w(rng: RngStream, ctx: ConditionalContext, state: ChainState) -> np.ndarray:
    mean, shrink = _w_eigen_moments(ctx, state)
    q = ctx.factor.eigvecs
    return mean + q @ (np.sqrt(shrink) * rng.standard_normal(ctx.n_obs))


def update_mu(rng: RngStream, ctx: ConditionalContext, state: ChainState) -> np.ndarray:
    linear = ctx.linear_predictor(state.beta) + state.w
    target = mu_conditional_target(linear, ctx.series.counts, state.sigma2, current=state.mu)
    return sample_arms(rng, target, state.mu)


_UPDATES: dict[str, Callable[[RngStream, ConditionalContext, ChainState], object]] = {
    "sigma2": update_sigma2,
    "sigmaw2": update_sigmaw2,
    "beta": update_beta,
    "w": update_w,
    "mu": update_mu,
}


def check_order(order: Sequence[str]) -> tuple[str, ...]:
    order = tuple(order)
    unknown = [name for name in order if name not in _UPDATES]
    if unknown or len(set(order)) != len(order):
        raise invalid_parameter(f"invalid sweep order {list(order)}; steps are {list(SWEEP_ORDER)}")
    return order


def sweep(
    rng: RngStream,
    ctx: ConditionalContext,
    state: ChainState,
    order: Sequence[str] = SWEEP_ORDER,
) -> ChainState:
    """One Gibbs sweep; steps left out of ``order`` keep their current value."""
    for step in order:
        state = replace(state, **{step: _UPDATES[step](rng, ctx, state)})
    return state


def initial_state(rng: RngStream, ctx: ConditionalContext) -> ChainState:
    series, config = ctx.series, ctx.config
    anchor, *_ = np.linalg.lstsq(series.design, np.log1p(series.counts.astype(float)), rcond=None)
    beta = anchor + config.init_jitter_sd * rng.standard_normal(series.n_coef)
    sigma2 = sample_inverse_gamma(rng, config.prior_shape, config.prior_scale)
    sigmaw2 = sample_inverse_gamma(rng, config.prior_shape, config.prior_scale)
    return ChainState(
        beta=beta,
        sigma2=sigma2,
        sigmaw2=sigmaw2,
        w=np.zeros(series.n_obs),
        mu=ctx.linear_predictor(beta),
    )


def monitored_names(series: ObservedSeries) -> list[str]:
    return [f"beta[{name}]" for name in series.covariate_names] + ["log_sigma2", "log_sigmaw2"]


def _monitored(state: ChainState) -> np.ndarray:
    return np.concatenate([state.beta, [math.log(state.sigma2), math.log(state.sigmaw2)]])


@dataclass
class _Chain:
    chain_id: int
    rng: RngStream
    state: ChainState
    trace: list[np.ndarray] = field(default_factory=list)
    stored: list[ChainState] = field(default_factory=list)

    def burn(self, ctx: ConditionalContext, sweeps: int, order: tuple[str, ...]) -> None:
        with bind_context(chain_id=self.chain_id):
            for _ in range(sweeps):
                self.state = sweep(self.rng, ctx, self.state, order)
                self.trace.append(_monitored(self.state))
            logging.debug("chain burn block done: sweeps=%s total=%s", sweeps, len(self.trace))

    def collect(self, ctx: ConditionalContext, n_draws: int, thin: int, order: tuple[str, ...]) -> None:
        with bind_context(chain_id=self.chain_id):
            for _ in range(n_draws):
                for _ in range(thin):
                    self.state = sweep(self.rng, ctx, self.state, order)
                self.stored.append(self.state)
            logging.debug("chain stored draws: %s", len(self.stored))

    def burn_traces(self) -> np.ndarray:
        traces = np.vstack(self.trace)
        return traces[traces.shape[0] // 2 :]


def _convergence_report(chains: Sequence[_Chain], names: Sequence[str], sweep_count: int) -> GelmanRubinReport:
    stacked = np.stack([chain.burn_traces() for chain in chains])
    return gelman_rubin_report({name: stacked[:, :, j] for j, name in enumerate(names)}, sweep_count)


def _run_all(pool: ThreadPoolExecutor, chains: Sequence[_Chain], work: Callable[[_Chain], None]) -> None:
    # each worker gets its own copy of the caller's log context
    futures = [pool.submit(contextvars.copy_context().run, work, chain) for chain in chains]
    for future in futures:
        future.result()


def run_sampler(
    series: ObservedSeries,
    config: ModelConfig,
    factor: CorrelationFactor,
    *,
    stream_tag: Sequence[StreamPart] = (),
    order: Sequence[str] = SWEEP_ORDER,
    initial_states: Sequence[ChainState] | None = None,
) -> PosteriorSamples:
    config.require_valid()
    order = check_order(order)
    if not math.isclose(factor.phi, config.phi, rel_tol=1e-12):
        raise invalid_parameter(f"factor built with phi={factor.phi}, config has phi={config.phi}")
    ctx = ConditionalContext.build(series, factor, config)
    if initial_states is not None and len(initial_states) != config.n_chains:
        raise invalid_parameter(f"{len(initial_states)} initial states for {config.n_chains} chains")

    chains: list[_Chain] = []
    for chain_id in range(config.n_chains):
        rng = RngStream.create(config.seed, "chain", *stream_tag, chain_id)
        state = initial_states[chain_id] if initial_states is not None else initial_state(rng, ctx)
        problems = state.violations(series)
        if problems:
            raise invalid_parameter("invalid initial state: " + "; ".join(problems), violations=problems)
        chains.append(_Chain(chain_id=chain_id, rng=rng, state=state))

    names = monitored_names(series)
    history: list[tuple[int, float]] = []
    burned = 0
    interval = config.gr_check_interval
    with ThreadPoolExecutor(max_workers=max(1, min(config.threads, config.n_chains))) as pool:
        while True:
            _run_all(pool, chains, lambda chain: chain.burn(ctx, interval, order))
            burned += interval
            report = _convergence_report(chains, names, burned)
            history.append((burned, report.max_stat))
            logging.info("gelman-rubin check: sweep=%s max_rhat=%.4f", burned, report.max_stat)
            if report.converged(config.gr_threshold):
                break
            if burned >= config.max_burn_sweeps:
                raise convergence_failure(
                    f"max R-hat {report.max_stat:.4f} still >= {config.gr_threshold} after {burned} sweeps",
                    gr_history=history,
                    factors=report.factors,
                    phi=config.phi,
                )

        per_chain = math.ceil(config.posterior_size / config.n_chains)
        _run_all(pool, chains, lambda chain: chain.collect(ctx, per_chain, config.thin, order))

    draws: list[ChainState] = []
    chain_ids: list[int] = []
    for k in range(config.posterior_size):
        chain = chains[k % config.n_chains]
        draws.append(chain.stored[k // config.n_chains])
        chain_ids.append(chain.chain_id)

    logging.info(
        "sampler done: phi=%s burn=%s draws=%s thin=%s",
        config.phi,
        burned,
        len(draws),
        config.thin,
    )
    return PosteriorSamples(
        draws=tuple(draws),
        phi_used=config.phi,
        burn_sweeps_used=burned,
        gr_history=tuple(history),
        chain_ids=tuple(chain_ids),
        thin=config.thin,
        coef_names=series.covariate_names,
    )
