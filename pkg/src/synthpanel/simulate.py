"""Synthetic panel generation with known ground truth.

Outcomes follow a latent factor model: a common random-walk shock per
outcome, plus region loadings on outcome-specific factor paths, plus
Gaussian noise, plus a planted post-treatment effect path on treated
units.  Treated loadings can be drawn as convex combinations of donor
loadings (so an exact counterfactual exists inside the donor pool) or
from the same distribution as donors (so treated and donors are
exchangeable under a null effect).  Every quantity the estimators try
to recover is recorded as ground truth.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

from .errors import ConfigError
from .keys import substream
from .panel import (
    DEFAULT_OUTCOMES,
    GEO_NUMERIC_FIELDS,
    GeoCovariates,
    PanelDataset,
    RegionId,
)

CLIMATE_ZONES = ("continental", "mediterranean", "oceanic", "temperate")

LOADING_MODES = ("hull", "exchangeable")


@dataclass(frozen=True)
class DgpConfig:
    """Data-generating-process settings for one synthetic panel."""

    n_treated: int = 2
    n_donors: int = 10
    years: tuple[int, int] = (1996, 2019)
    t0: int = 2006
    n_factors: int = 3
    factor_scale: float = 0.2
    loading_scale: float = 1.0
    noise_sd: float = 0.05
    planted_effect: Mapping[int, float] = field(default_factory=dict)
    covariate_link: float = 0.0
    loading_mode: str = "hull"
    outcomes: tuple[str, ...] = DEFAULT_OUTCOMES
    seed: int = 0

    def __post_init__(self) -> None:
        first, last = (int(self.years[0]), int(self.years[1]))
        object.__setattr__(self, "years", (first, last))
        if self.n_treated < 1:
            raise ConfigError("need at least 1 treated region")
        if self.n_donors < 2:
            raise ConfigError("need at least 2 donor regions")
        if first > last:
            raise ConfigError(f"year range {self.years} is empty")
        if not first < self.t0 < last:
            raise ConfigError(
                f"t0={self.t0} must lie strictly inside the year range {self.years}"
            )
        if self.n_factors < 1:
            raise ConfigError("need at least 1 factor")
        for name in ("factor_scale", "loading_scale", "noise_sd"):
            if getattr(self, name) < 0:
                raise ConfigError(f"{name} must be non-negative")
        if not 0.0 <= self.covariate_link <= 1.0:
            raise ConfigError("covariate_link must be in [0, 1]")
        if self.loading_mode not in LOADING_MODES:
            raise ConfigError(
                f"loading_mode must be one of {LOADING_MODES}, got {self.loading_mode!r}"
            )
        if not self.outcomes:
            raise ConfigError("need at least one outcome")
        effect = {int(y): float(v) for y, v in dict(self.planted_effect).items()}
        for y, v in effect.items():
            if not self.t0 < y <= last:
                raise ConfigError(
                    f"planted effect year {y} is not a post-treatment year"
                )
            if not math.isfinite(v):
                raise ConfigError(f"planted effect for year {y} is not finite")
        object.__setattr__(self, "planted_effect", effect)
        if self.seed < 0:
            raise ConfigError("seed must be non-negative")

    @property
    def year_list(self) -> tuple[int, ...]:
        return tuple(range(self.years[0], self.years[1] + 1))


@dataclass(frozen=True)
class GroundTruth:
    """Everything the generator planted, for use as a test oracle."""

    alpha: Mapping[int, float]
    weights: Mapping[str, Mapping[str, float]]
    loadings: Mapping[str, tuple[float, ...]]
    factors: Mapping[str, np.ndarray]
    deltas: Mapping[str, np.ndarray]
    loading_mode: str


def constant_effect(value: float, t0: int, last_year: int) -> dict[int, float]:
    """A flat planted-effect path over every post-treatment year."""
    return {y: float(value) for y in range(t0 + 1, last_year + 1)}


def generate(cfg: DgpConfig) -> tuple[PanelDataset, GroundTruth]:
    """Draw one panel and its ground truth; bit-identical per seed.

    Outcome values are delta_t + factors'loadings + noise, with the
    planted effect added to treated units after t0.  In ``hull`` mode
    each treated loading vector is a Dirichlet convex combination of the
    donor loadings, so with zero noise the treated outcome path is
    exactly that combination of donor paths.  In ``exchangeable`` mode
    treated loadings are drawn iid like donor loadings.
    """
    years = cfg.year_list
    n_years = len(years)
    treated_codes = [f"T{i + 1:02d}" for i in range(cfg.n_treated)]
    donor_codes = [f"D{i + 1:02d}" for i in range(cfg.n_donors)]
    codes = treated_codes + donor_codes
    n_regions = len(codes)

    loading_rng = substream(cfg.seed, "loadings")
    donor_loadings = loading_rng.normal(
        0.0, cfg.loading_scale, size=(cfg.n_donors, cfg.n_factors)
    )
    weights: dict[str, dict[str, float]] = {}
    if cfg.loading_mode == "hull":
        hull_rng = substream(cfg.seed, "hull_weights")
        treated_loadings = np.empty((cfg.n_treated, cfg.n_factors))
        for i, code in enumerate(treated_codes):
            w = hull_rng.dirichlet(np.ones(cfg.n_donors))
            treated_loadings[i] = w @ donor_loadings
            weights[code] = dict(zip(donor_codes, map(float, w)))
    else:
        treated_loadings = loading_rng.normal(
            0.0, cfg.loading_scale, size=(cfg.n_treated, cfg.n_factors)
        )
    loadings = np.vstack([treated_loadings, donor_loadings])

    factors: dict[str, np.ndarray] = {}
    deltas: dict[str, np.ndarray] = {}
    values = np.empty((n_regions, len(cfg.outcomes), n_years))
    noise_rng = substream(cfg.seed, "noise")
    alpha = np.zeros(n_years)
    for y, v in cfg.planted_effect.items():
        alpha[years.index(y)] = v
    for o, outcome in enumerate(cfg.outcomes):
        factor_rng = substream(cfg.seed, "factors", outcome)
        lam = np.empty((cfg.n_factors, n_years))
        lam[0] = 1.0
        for h in range(1, cfg.n_factors):
            lam[h] = cfg.factor_scale * np.cumsum(factor_rng.normal(size=n_years))
        delta = cfg.factor_scale * np.cumsum(factor_rng.normal(size=n_years))
        factors[outcome] = lam
        deltas[outcome] = delta
        base = delta[None, :] + loadings @ lam
        if cfg.noise_sd > 0:
            base = base + cfg.noise_sd * noise_rng.normal(size=base.shape)
        base[: cfg.n_treated] += alpha[None, :]
        values[:, o, :] = base

    covariate_rng = substream(cfg.seed, "covariates")
    directions = covariate_rng.normal(
        size=(len(GEO_NUMERIC_FIELDS), cfg.n_factors)
    ) / math.sqrt(cfg.n_factors)
    eta = covariate_rng.normal(size=(n_regions, len(GEO_NUMERIC_FIELDS)))
    linked = loadings @ directions.T
    cov_values = cfg.covariate_link * linked + (1.0 - cfg.covariate_link) * eta
    climate_rng = substream(cfg.seed, "climate")
    zones = climate_rng.choice(len(CLIMATE_ZONES), size=n_regions)

    regions = tuple(
        RegionId(code=code, name=code, country="SIM", treated=code in set(treated_codes))
        for code in codes
    )
    covariates = {
        code: GeoCovariates(
            **{name: float(cov_values[i, k]) for k, name in enumerate(GEO_NUMERIC_FIELDS)},
            climate_zone=CLIMATE_ZONES[int(zones[i])],
        )
        for i, code in enumerate(codes)
    }
    ds = PanelDataset(
        regions=regions,
        outcomes=cfg.outcomes,
        years=years,
        values=values,
        covariates=covariates,
        t0=cfg.t0,
    )
    truth = GroundTruth(
        alpha=dict(cfg.planted_effect),
        weights=weights,
        loadings={code: tuple(map(float, loadings[i])) for i, code in enumerate(codes)},
        factors=factors,
        deltas=deltas,
        loading_mode=cfg.loading_mode,
    )
    return ds, truth

