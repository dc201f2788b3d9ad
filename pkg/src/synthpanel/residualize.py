"""Cross-sectional residualization of outcomes on geography.

For each (outcome, year) the full cross-section of regions is regressed
on the time-invariant covariates; the residual is the part of the
outcome the geography does not explain.  A positive residual means the
region does better than its geography predicts.  Fits are never pooled
over time.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass
from typing import Mapping

import numpy as np

from .errors import RankDeficient, YearMismatch
from .panel import CLIMATE_FIELD, GeoCovariates, PanelDataset

# Columns are dropped greedily when adding them pushes the reciprocal
# condition estimate of the design cross-product below this.
RCOND_MIN = 1e-10


@dataclass(frozen=True)
class ResidualModel:
    """One cross-sectional OLS fit for a single (outcome, year).

    Coefficients are reported in original covariate units even though
    the fit standardizes columns internally.
    """

    outcome: str
    year: int
    intercept: float
    coefficients: tuple[tuple[str, float], ...]
    dropped: tuple[str, ...]
    r_squared: float
    n_obs: int

    def coefficient_map(self) -> dict[str, float]:
        return dict(self.coefficients)

    def predict(self, ds: PanelDataset) -> np.ndarray:
        """Predicted outcome for every region of ``ds``, in region order."""
        columns, matrix = design_matrix(ds)
        index = {name: k for k, name in enumerate(columns)}
        pred = np.full(ds.n_regions, self.intercept)
        for name, coef in self.coefficients:
            pred += coef * matrix[:, index[name]]
        return pred


@dataclass(frozen=True)
class ResidualSeries:
    """Residual and predicted series for one (region, outcome)."""

    region: str
    outcome: str
    years: tuple[int, ...]
    values: np.ndarray
    predicted: np.ndarray
    observed: np.ndarray

    def __post_init__(self) -> None:
        for name in ("values", "predicted", "observed"):
            arr = np.ascontiguousarray(getattr(self, name), dtype=np.float64)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        object.__setattr__(self, "years", tuple(int(y) for y in self.years))

    def value_map(self) -> dict[int, float]:
        return {y: float(v) for y, v in zip(self.years, self.values)}


@dataclass(frozen=True)
class QualitySeries:
    """Recomposed series: aggregate plus residual, per year."""

    region: str
    outcome: str
    years: tuple[int, ...]
    values: np.ndarray

    def value_map(self) -> dict[int, float]:
        return {y: float(v) for y, v in zip(self.years, self.values)}


def climate_dummy_levels(ds: PanelDataset) -> tuple[str, ...]:
    """Climate zones encoded as indicators: all levels except the baseline.

    The most frequent zone is omitted; frequency ties break toward the
    lexicographically smallest zone.  Returns () when zones are unused.
    """
    zones = [ds.covariates[r.code].climate_zone for r in ds.regions]
    if all(z == "" for z in zones):
        return ()
    counts = Counter(zones)
    baseline = min(counts, key=lambda z: (-counts[z], z))
    return tuple(sorted(z for z in counts if z != baseline))


def design_matrix(ds: PanelDataset) -> tuple[tuple[str, ...], np.ndarray]:
    """Unstandardized covariate design in canonical column order.

    Numeric fields first (standard then extras), then climate-zone
    indicator columns named ``climate_zone=<zone>``.
    """
    first: GeoCovariates = ds.covariates[ds.regions[0].code]
    numeric_names = first.numeric_names()
    dummy_levels = climate_dummy_levels(ds)
    columns = numeric_names + tuple(f"{CLIMATE_FIELD}={z}" for z in dummy_levels)
    matrix = np.empty((ds.n_regions, len(columns)))
    for i, region in enumerate(ds.regions):
        cov = ds.covariates[region.code]
        for k, name in enumerate(numeric_names):
            matrix[i, k] = cov.get(name)
        for k, zone in enumerate(dummy_levels):
            matrix[i, len(numeric_names) + k] = 1.0 if cov.climate_zone == zone else 0.0
    return columns, matrix


def _greedy_select(matrix: np.ndarray, n_obs: int) -> tuple[list[int], list[int]]:
    """Greedy forward selection of standardized columns.

    A column is dropped when it is constant, when appending it to the
    design leaves the cross-product with reciprocal condition below
    :data:`RCOND_MIN`, or when keeping it would leave fewer than two
    residual degrees of freedom.
    """
    kept: list[int] = []
    dropped: list[int] = []
    design = [np.ones(n_obs)]
    for k in range(matrix.shape[1]):
        column = matrix[:, k]
        sd = column.std()
        if sd == 0.0:
            dropped.append(k)
            continue
        if n_obs < len(design) + 1 + 2:
            dropped.append(k)
            continue
        candidate = np.column_stack(design + [(column - column.mean()) / sd])
        singular = np.linalg.svd(candidate, compute_uv=False)
        rcond = (singular[-1] / singular[0]) ** 2 if singular[0] > 0 else 0.0
        if rcond < RCOND_MIN:
            dropped.append(k)
            continue
        kept.append(k)
        design.append(candidate[:, -1])
    return kept, dropped


def fit_cross_section(ds: PanelDataset, outcome: str, year: int) -> ResidualModel:
    """OLS of one outcome on the covariates across all regions of one year."""
    y = ds.values[:, ds.outcome_index(outcome), ds.year_index(year)]
    n_obs = ds.n_regions
    if n_obs < 2:
        raise RankDeficient(
            f"outcome {outcome!r}, year {year}: {n_obs} region(s) cannot support a fit"
        )
    columns, matrix = design_matrix(ds)
    kept, dropped = _greedy_select(matrix, n_obs)
    means = matrix[:, kept].mean(axis=0) if kept else np.empty(0)
    sds = matrix[:, kept].std(axis=0) if kept else np.empty(0)
    design = np.column_stack(
        [np.ones(n_obs)] + [(matrix[:, k] - m) / s for k, m, s in zip(kept, means, sds)]
    )
    beta, *_ = np.linalg.lstsq(design, y, rcond=None)
    fitted = design @ beta
    ssr = float(np.sum((y - fitted) ** 2))
    sst = float(np.sum((y - y.mean()) ** 2))
    if ssr <= 1e-28:
        r_squared = 1.0
    elif sst <= 0.0:
        r_squared = 0.0
    else:
        r_squared = min(max(1.0 - ssr / sst, 0.0), 1.0)
    slopes = beta[1:] / sds if kept else np.empty(0)
    intercept = float(beta[0] - np.sum(slopes * means)) if kept else float(beta[0])
    return ResidualModel(
        outcome=outcome,
        year=int(year),
        intercept=intercept,
        coefficients=tuple((columns[k], float(b)) for k, b in zip(kept, slopes)),
        dropped=tuple(columns[k] for k in dropped),
        r_squared=r_squared,
        n_obs=n_obs,
    )


def residualize(ds: PanelDataset, outcome: str) -> dict[str, ResidualSeries]:
    """Residual series per region for one outcome, fit year by year."""
    o = ds.outcome_index(outcome)
    predicted = np.empty((ds.n_regions, ds.n_years))
    for t, year in enumerate(ds.years):
        try:
            model = fit_cross_section(ds, outcome, year)
        except RankDeficient as err:
            raise RankDeficient(f"year {year}: {err}") from err
        predicted[:, t] = model.predict(ds)
    observed = ds.values[:, o, :]
    residual = observed - predicted
    return {
        region.code: ResidualSeries(
            region=region.code,
            outcome=outcome,
            years=ds.years,
            values=residual[i],
            predicted=predicted[i],
            observed=observed[i],
        )
        for i, region in enumerate(ds.regions)
    }


def recompose(aggregate: Mapping[int, float], resid: ResidualSeries) -> QualitySeries:
    """Pointwise sum of an aggregate series and a residual series."""
    if tuple(sorted(aggregate)) != resid.years:
        raise YearMismatch(
            f"aggregate years {sorted(aggregate)} do not match residual years {list(resid.years)}"
        )
    values = np.array([aggregate[y] for y in resid.years]) + resid.values
    return QualitySeries(
        region=resid.region, outcome=resid.outcome, years=resid.years, values=values
    )
