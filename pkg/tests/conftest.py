"""Shared fixtures: small hand-built panels with known structure."""

from __future__ import annotations

import numpy as np
import pytest

from synthpanel import GeoCovariates, PanelDataset, RegionId


def make_covariates(rng: np.random.Generator, climate: str = "temperate") -> GeoCovariates:
    vals = rng.normal(size=9)
    return GeoCovariates(
        latitude=float(vals[0]),
        longitude=float(vals[1]),
        capital=float(vals[2]),
        landlocked=float(vals[3]),
        land_area_log=float(vals[4]),
        altitude=float(vals[5]),
        temperature=float(vals[6]),
        rainfall=float(vals[7]),
        sunshine=float(vals[8]),
        climate_zone=climate,
    )


def build_panel(
    values: np.ndarray,
    n_treated: int,
    years: tuple[int, ...],
    t0: int,
    outcomes: tuple[str, ...] = ("metric",),
    seed: int = 0,
    climates: tuple[str, ...] = ("temperate", "continental"),
) -> PanelDataset:
    """Panel from a (regions, outcomes, years) value cube; first units treated."""
    rng = np.random.default_rng(seed)
    n = values.shape[0]
    regions = tuple(
        RegionId(
            code=f"R{i:02d}",
            name=f"Region {i}",
            country="TST",
            treated=i < n_treated,
        )
        for i in range(n)
    )
    covariates = {
        r.code: make_covariates(rng, climates[i % len(climates)])
        for i, r in enumerate(regions)
    }
    return PanelDataset(
        regions=regions,
        outcomes=outcomes,
        years=years,
        values=np.asarray(values, dtype=np.float64),
        covariates=covariates,
        t0=t0,
    )


@pytest.fixture
def small_panel() -> PanelDataset:
    """8 regions (2 treated), 1 outcome, 10 years, t0 = 2004."""
    rng = np.random.default_rng(42)
    years = tuple(range(2000, 2010))
    values = rng.normal(size=(8, 1, len(years)))
    return build_panel(values, n_treated=2, years=years, t0=2004)


@pytest.fixture
def hull_panel() -> PanelDataset:
    """Treated row is an exact convex combination of the donors.

    One outcome over 12 years; treated unit R00 = 0.6*R01 + 0.4*R02,
    with three more donors of independent noise.  A perfect synthetic
    control exists, so pre-period fit can reach zero.
    """
    rng = np.random.default_rng(7)
    years = tuple(range(2000, 2012))
    donors = rng.normal(size=(5, 1, len(years)))
    treated = 0.6 * donors[0] + 0.4 * donors[1]
    values = np.concatenate([treated[None], donors], axis=0)
    return build_panel(values, n_treated=1, years=years, t0=2005)
