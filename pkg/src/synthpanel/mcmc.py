"""Adaptive random-walk Metropolis-Hastings posterior smoothing.

Each residual observation is treated as a noisy measurement of a latent
location parameter with Gaussian error and a flat non-informative prior,
so the target is a Gaussian centered on the observation.  The chain uses
a heavy-tailed Student-t proposal whose step size adapts toward a target
acceptance rate during burn-in and is frozen afterward, keeping the kept
portion a valid Markov chain.  All acceptance arithmetic stays in log
space.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Mapping

import numpy as np

from .errors import (
    ConfigError,
    DegenerateTarget,
    NonFiniteInit,
    NonPositiveScale,
)
from .keys import substream
from .residualize import ResidualSeries

# Observation scales below this are clamped so a zero cross-sectional
# spread degenerates to a chain pinned at the observation instead of a
# division by zero.
SCALE_FLOOR = 1e-12


@dataclass(frozen=True)
class SamplerConfig:
    """Chain length, adaptation, and proposal shape settings."""

    iterations: int = 12_500
    burn_in: int = 2_500
    target_acceptance: float = 0.25
    acceptance_band: tuple[float, float] = (0.20, 0.40)
    proposal_df: float = 5.0
    adaptation_window: int = 100
    initial_step: float | None = None
    obs_scale_factor: float = 0.5
    seed: int = 0

    def __post_init__(self) -> None:
        if not 0 < self.burn_in < self.iterations:
            raise ConfigError("need 0 < burn_in < iterations")
        lo, hi = self.acceptance_band
        if not 0.0 < lo <= self.target_acceptance <= hi < 1.0:
            raise ConfigError("target_acceptance must lie within acceptance_band")
        if self.proposal_df <= 0:
            raise ConfigError("proposal_df must be positive")
        if self.adaptation_window < 1:
            raise ConfigError("adaptation_window must be at least 1")
        if self.initial_step is not None and self.initial_step <= 0:
            raise ConfigError("initial_step must be positive when given")
        if self.obs_scale_factor <= 0:
            raise ConfigError("obs_scale_factor must be positive")
        if self.seed < 0:
            raise ConfigError("seed must be non-negative")


@dataclass(frozen=True)
class TargetDensity:
    """Unnormalized log target; must be vectorized over a draw array."""

    log_density: Callable[[np.ndarray], np.ndarray]
    name: str = ""


@dataclass(frozen=True)
class ChainResult:
    """Kept draws plus realized diagnostics for one scalar chain."""

    draws: np.ndarray
    acceptance_rate: float
    step_size: float
    ess: float
    iterations: int
    burn_in: int


@dataclass(frozen=True)
class PosteriorSummary:
    """Posterior summary for one (region, year) cell."""

    region: str
    year: int
    mean: float
    median: float
    lower: float
    upper: float
    acceptance_rate: float
    ess: float
    step_size: float


class SmoothResult(Mapping):
    """Mapping (region, year) -> PosteriorSummary plus run bookkeeping."""

    def __init__(
        self,
        outcome: str,
        summaries: dict[tuple[str, int], PosteriorSummary],
        obs_scales: dict[int, float],
        total_iterations: int,
    ) -> None:
        self.outcome = outcome
        self.summaries = summaries
        self.obs_scales = obs_scales
        self.total_iterations = total_iterations

    def __getitem__(self, key: tuple[str, int]) -> PosteriorSummary:
        return self.summaries[key]

    def __iter__(self):
        return iter(self.summaries)

    def __len__(self) -> int:
        return len(self.summaries)


def planned_iterations(cfg: SamplerConfig, n_outcomes: int, n_years: int) -> int:
    """Total chain iterations a full smoothing pass will spend."""
    return cfg.iterations * n_outcomes * n_years


def jeffreys_target(residual_obs: float, obs_scale: float) -> TargetDensity:
    """Posterior for a Gaussian-observed location under a flat prior.

    log pi(theta) = -(theta - residual_obs)^2 / (2 obs_scale^2) up to a
    constant; the flat location prior contributes nothing.
    """
    if not math.isfinite(obs_scale) or obs_scale <= 0:
        raise NonPositiveScale(f"obs_scale must be positive, got {obs_scale!r}")
    if not math.isfinite(residual_obs):
        raise NonFiniteInit(f"residual observation not finite: {residual_obs!r}")
    inv_two_var = 0.5 / (obs_scale * obs_scale)

    def log_density(theta: np.ndarray) -> np.ndarray:
        diff = np.asarray(theta, dtype=np.float64) - residual_obs
        return -inv_two_var * diff * diff

    return TargetDensity(log_density=log_density, name=f"location({residual_obs:g})")


def _run_chain(
    logpdf: Callable[[np.ndarray], np.ndarray],
    init: np.ndarray,
    cfg: SamplerConfig,
    rng: np.random.Generator,
    initial_step: float,
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Vectorized chain over independent coordinates sharing one budget.

    Returns (kept draws with shape (kept, n), per-coordinate post-burn-in
    acceptance rate, per-coordinate frozen step size).
    """
    n = init.size
    x = init.astype(np.float64).copy()
    lp = np.asarray(logpdf(x), dtype=np.float64)
    log_step = np.full(n, math.log(initial_step))
    gain = 1.0 / cfg.adaptation_window
    target = cfg.target_acceptance
    n_kept = cfg.iterations - cfg.burn_in
    kept = np.empty((n_kept, n))
    accepted_post = np.zeros(n)
    for g in range(cfg.iterations):
        proposal = x + np.exp(log_step) * rng.standard_t(cfg.proposal_df, size=n)
        lp_proposal = np.asarray(logpdf(proposal), dtype=np.float64)
        lp_proposal = np.where(np.isnan(lp_proposal), -np.inf, lp_proposal)
        with np.errstate(divide="ignore"):
            log_u = np.log(rng.random(n))
        accept = log_u < (lp_proposal - lp)
        x = np.where(accept, proposal, x)
        lp = np.where(accept, lp_proposal, lp)
        if g < cfg.burn_in:
            log_step += gain * (accept - target)
        else:
            kept[g - cfg.burn_in] = x
            accepted_post += accept
    return kept, accepted_post / n_kept, np.exp(log_step)


def mh_chain(
    target: TargetDensity, init: float, cfg: SamplerConfig | None = None
) -> ChainResult:
    """Run one adaptive random-walk chain against ``target``.

    The proposal is Student-t with ``cfg.proposal_df`` degrees of
    freedom; acceptance uses the symmetric-proposal ratio in log space.
    Deterministic given ``cfg.seed``.
    """
    cfg = cfg or SamplerConfig()
    if not math.isfinite(init):
        raise NonFiniteInit(f"chain init not finite: {init!r}")
    lp0 = float(np.asarray(target.log_density(np.array([init])))[0])
    if math.isnan(lp0):
        raise NonFiniteInit(f"target log-density is NaN at init {init!r}")
    if lp0 == -math.inf:
        raise DegenerateTarget(f"target has zero density at init {init!r}")
    rng = substream(cfg.seed, "mh_chain", target.name)
    step0 = cfg.initial_step if cfg.initial_step is not None else 1.0
    kept, acceptance, steps = _run_chain(
        target.log_density, np.array([init]), cfg, rng, step0
    )
    draws = kept[:, 0].copy()
    return ChainResult(
        draws=draws,
        acceptance_rate=float(acceptance[0]),
        step_size=float(steps[0]),
        ess=ess(draws),
        iterations=cfg.iterations,
        burn_in=cfg.burn_in,
    )


def ess(draws: np.ndarray) -> float:
    """Effective sample size via the initial-positive-sequence rule.

    Autocovariances are summed in adjacent pairs until a pair goes
    non-positive.  A constant chain carries one effective draw.
    """
    draws = np.asarray(draws, dtype=np.float64)
    n = draws.size
    if n < 2:
        return float(n)
    centered = draws - draws.mean()
    variance = float(centered @ centered) / n
    if variance <= 0.0:
        return 1.0
    size = 1 << (2 * n - 1).bit_length()
    spectrum = np.fft.rfft(centered, size)
    acov = np.fft.irfft(spectrum * np.conj(spectrum), size)[:n].real / n
    rho = acov / acov[0]
    tau = 1.0
    m = 1
    while m + 1 < n:
        pair = rho[m] + rho[m + 1]
        if pair <= 0.0:
            break
        tau += 2.0 * pair
        m += 2
    return float(min(max(n / tau, 1.0), n))


def smooth_panel(
    resid: Mapping[str, ResidualSeries], cfg: SamplerConfig | None = None
) -> SmoothResult:
    """Posterior summaries for every (region, year) of one outcome.

    One chain per year: region values are independent coordinates
    sharing that year's iteration budget.  The observation scale is the
    cross-regional standard deviation of that year's residuals times
    ``cfg.obs_scale_factor``.  Substreams are keyed by (seed, outcome,
    year) so cells are reproducible independent of execution order.
    """
    cfg = cfg or SamplerConfig()
    if not resid:
        raise ConfigError("smooth_panel needs at least one residual series")
    # canonical coordinate order: results must not depend on mapping order
    series = [resid[code] for code in sorted(resid)]
    outcome = series[0].outcome
    years = series[0].years
    for s in series[1:]:
        if s.years != years or s.outcome != outcome:
            raise ConfigError("residual series disagree on outcome or year range")
    codes = [s.region for s in series]
    matrix = np.stack([s.values for s in series])
    summaries: dict[tuple[str, int], PosteriorSummary] = {}
    obs_scales: dict[int, float] = {}
    total = 0
    for t, year in enumerate(years):
        observations = matrix[:, t]
        scale = max(float(observations.std()) * cfg.obs_scale_factor, SCALE_FLOOR)
        obs_scales[year] = scale
        inv_two_var = 0.5 / (scale * scale)

        def log_density(theta: np.ndarray, obs: np.ndarray = observations) -> np.ndarray:
            diff = theta - obs
            return -inv_two_var * diff * diff

        rng = substream(cfg.seed, "smooth", outcome, year)
        step0 = cfg.initial_step if cfg.initial_step is not None else 2.4 * scale
        kept, acceptance, steps = _run_chain(log_density, observations, cfg, rng, step0)
        total += cfg.iterations
        lower, median, upper = np.quantile(kept, (0.025, 0.5, 0.975), axis=0)
        means = kept.mean(axis=0)
        for i, code in enumerate(codes):
            summaries[(code, year)] = PosteriorSummary(
                region=code,
                year=year,
                mean=float(means[i]),
                median=float(median[i]),
                lower=float(lower[i]),
                upper=float(upper[i]),
                acceptance_rate=float(acceptance[i]),
                ess=ess(kept[:, i]),
                step_size=float(steps[i]),
            )
    return SmoothResult(
        outcome=outcome, summaries=summaries, obs_scales=obs_scales, total_iterations=total
    )
