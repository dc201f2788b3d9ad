"""Core panel types, CSV ingestion, and treatment-design validation.

The panel is strongly balanced by construction: every region carries a
value for every (outcome, year) cell, years form a contiguous integer
range, and per-region attributes (country, treated flag, geography) are
constant over time.  Validation failures raise typed errors naming the
offending region, year, or column rather than silently repairing data.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from types import MappingProxyType
from typing import Iterable, Mapping

import numpy as np

from .errors import (
    ConfigError,
    DuplicateRow,
    EmptyDonorPool,
    InconsistentCovariate,
    MissingCell,
    NonFinite,
    NoPostPeriod,
    NoPrePeriod,
)

# Default outcome dimensions; any other outcome set is accepted.
DEFAULT_OUTCOMES: tuple[str, ...] = (
    "voice_accountability",
    "political_stability",
    "government_effectiveness",
    "regulatory_quality",
    "rule_of_law",
    "control_of_corruption",
)

# Time-invariant numeric geography fields, in canonical column order.
GEO_NUMERIC_FIELDS: tuple[str, ...] = (
    "latitude",
    "longitude",
    "capital",
    "landlocked",
    "land_area_log",
    "altitude",
    "temperature",
    "rainfall",
    "sunshine",
)

CLIMATE_FIELD = "climate_zone"

_TRUE_STRINGS = {"1", "true", "yes", "t"}
_FALSE_STRINGS = {"0", "false", "no", "f"}

# Minimum pre-period length: the pre-period must admit a nonempty
# training/validation split downstream.
MIN_PRE_PERIODS = 2
MIN_DONORS = 2


@dataclass(frozen=True)
class RegionId:
    """Identity of one region: code, display name, country, treated flag."""

    code: str
    name: str
    country: str
    treated: bool


@dataclass(frozen=True)
class GeoCovariates:
    """Time-invariant geography for one region.

    All numeric fields must be finite.  ``extra`` holds additional
    numeric covariates as a sorted tuple of (name, value) pairs so the
    object stays hashable and deterministic.
    """

    latitude: float
    longitude: float
    capital: float
    landlocked: float
    land_area_log: float
    altitude: float
    temperature: float
    rainfall: float
    sunshine: float
    climate_zone: str = ""
    extra: tuple[tuple[str, float], ...] = ()

    def __post_init__(self) -> None:
        object.__setattr__(self, "extra", tuple(sorted(self.extra)))
        for name, value in self.items():
            if not math.isfinite(value):
                raise NonFinite(f"covariate {name!r} is not finite: {value!r}")

    def items(self) -> list[tuple[str, float]]:
        """Numeric covariates in canonical order: standard fields then extras."""
        out = [(name, float(getattr(self, name))) for name in GEO_NUMERIC_FIELDS]
        out.extend((name, float(value)) for name, value in self.extra)
        return out

    def get(self, name: str) -> float:
        if name in GEO_NUMERIC_FIELDS:
            return float(getattr(self, name))
        for key, value in self.extra:
            if key == name:
                return float(value)
        raise KeyError(name)

    def numeric_names(self) -> tuple[str, ...]:
        return GEO_NUMERIC_FIELDS + tuple(name for name, _ in self.extra)


@dataclass(frozen=True, eq=False)
class PanelDataset:
    """Strongly balanced region x outcome x year panel.

    ``values`` has shape (n_regions, n_outcomes, n_years), aligned with
    ``regions``, ``outcomes``, and ``years``.  ``t0`` is the treatment
    year: pre-period years satisfy ``year <= t0``, post-period years
    ``year > t0`` (treatment takes effect the following year).
    Instances are immutable after construction.
    """

    regions: tuple[RegionId, ...]
    outcomes: tuple[str, ...]
    years: tuple[int, ...]
    values: np.ndarray
    covariates: Mapping[str, GeoCovariates]
    t0: int

    def __post_init__(self) -> None:
        regions = tuple(self.regions)
        outcomes = tuple(str(o) for o in self.outcomes)
        years = tuple(int(y) for y in self.years)
        if not regions:
            raise MissingCell("panel has no regions")
        if not outcomes:
            raise MissingCell("panel has no outcome columns")
        if not years:
            raise MissingCell("panel has no years")
        codes = [r.code for r in regions]
        seen: set[str] = set()
        for code in codes:
            if code in seen:
                raise DuplicateRow(f"duplicate region code {code!r}")
            seen.add(code)
        if len(set(outcomes)) != len(outcomes):
            raise DuplicateRow("duplicate outcome name")
        for prev, cur in zip(years, years[1:]):
            if cur != prev + 1:
                raise MissingCell(f"years are not contiguous: no year {prev + 1}")
        values = np.ascontiguousarray(self.values, dtype=np.float64)
        expected = (len(regions), len(outcomes), len(years))
        if values.shape != expected:
            raise MissingCell(
                f"values shape {values.shape} does not match "
                f"(regions, outcomes, years) = {expected}"
            )
        if not np.all(np.isfinite(values)):
            r, o, y = (int(i[0]) for i in np.nonzero(~np.isfinite(values)))
            raise NonFinite(
                f"non-finite outcome for region {codes[r]!r}, "
                f"outcome {outcomes[o]!r}, year {years[y]}"
            )
        covs = dict(self.covariates)
        for code in codes:
            if code not in covs:
                raise MissingCell(f"no covariates for region {code!r}")
        extra_names = {covs[code].numeric_names() for code in codes}
        if len(extra_names) > 1:
            raise InconsistentCovariate("regions disagree on covariate columns")
        zones = {covs[code].climate_zone == "" for code in codes}
        if len(zones) > 1:
            raise InconsistentCovariate("climate zone set on some regions only")
        t0 = int(self.t0)
        if t0 < years[0]:
            raise NoPrePeriod(f"t0={t0} precedes first year {years[0]}")
        if t0 >= years[-1]:
            raise NoPostPeriod(f"t0={t0} leaves no post-period (last year {years[-1]})")
        values.setflags(write=False)
        object.__setattr__(self, "regions", regions)
        object.__setattr__(self, "outcomes", outcomes)
        object.__setattr__(self, "years", years)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "covariates", MappingProxyType(covs))
        object.__setattr__(self, "t0", t0)
        object.__setattr__(self, "_region_index", {c: i for i, c in enumerate(codes)})
        object.__setattr__(self, "_outcome_index", {o: i for i, o in enumerate(outcomes)})

    # -- lookups ----------------------------------------------------------

    @property
    def n_regions(self) -> int:
        return len(self.regions)

    @property
    def n_outcomes(self) -> int:
        return len(self.outcomes)

    @property
    def n_years(self) -> int:
        return len(self.years)

    @property
    def n_rows(self) -> int:
        """Row count of the long-form file: regions x years."""
        return self.n_regions * self.n_years

    def region_index(self, code: str) -> int:
        try:
            return self._region_index[code]  # type: ignore[attr-defined]
        except KeyError:
            raise KeyError(f"unknown region {code!r}") from None

    def outcome_index(self, outcome: str) -> int:
        try:
            return self._outcome_index[outcome]  # type: ignore[attr-defined]
        except KeyError:
            raise KeyError(f"unknown outcome {outcome!r}") from None

    def year_index(self, year: int) -> int:
        if year < self.years[0] or year > self.years[-1]:
            raise KeyError(f"year {year} outside panel range")
        return int(year) - self.years[0]

    def region(self, code: str) -> RegionId:
        return self.regions[self.region_index(code)]

    def value(self, code: str, outcome: str, year: int) -> float:
        return float(
            self.values[
                self.region_index(code), self.outcome_index(outcome), self.year_index(year)
            ]
        )

    def series(self, code: str, outcome: str) -> np.ndarray:
        """Read-only outcome series for one region, aligned with ``years``."""
        return self.values[self.region_index(code), self.outcome_index(outcome)]

    @property
    def treated_codes(self) -> tuple[str, ...]:
        return tuple(r.code for r in self.regions if r.treated)

    @property
    def donor_codes(self) -> tuple[str, ...]:
        return tuple(r.code for r in self.regions if not r.treated)

    @property
    def pre_years(self) -> tuple[int, ...]:
        return tuple(y for y in self.years if y <= self.t0)

    @property
    def post_years(self) -> tuple[int, ...]:
        return tuple(y for y in self.years if y > self.t0)

    def with_values(
        self, values: np.ndarray, outcomes: tuple[str, ...] | None = None
    ) -> "PanelDataset":
        """Same regions, years, covariates, and t0 with replaced cell values."""
        return PanelDataset(
            regions=self.regions,
            outcomes=self.outcomes if outcomes is None else outcomes,
            years=self.years,
            values=values,
            covariates=dict(self.covariates),
            t0=self.t0,
        )

    def equals(self, other: "PanelDataset") -> bool:
        """Bit-exact equality on every field, for round-trip checks."""
        return (
            self.regions == other.regions
            and self.outcomes == other.outcomes
            and self.years == other.years
            and self.t0 == other.t0
            and np.array_equal(self.values, other.values)
            and dict(self.covariates) == dict(other.covariates)
        )


@dataclass(frozen=True)
class GapSeries:
    """Per-year gap (observed minus synthetic) for one (region, outcome).

    ``rmse_pre`` and ``rmse_post`` are root-mean-square gaps over the
    pre-period (years <= t0) and post-period (years > t0); both are
    recomputable from ``values``.
    """

    region: str
    outcome: str
    years: tuple[int, ...]
    values: np.ndarray
    t0: int
    rmse_pre: float
    rmse_post: float

    def __post_init__(self) -> None:
        values = np.ascontiguousarray(self.values, dtype=np.float64)
        values.setflags(write=False)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "years", tuple(int(y) for y in self.years))

    @classmethod
    def from_values(
        cls, region: str, outcome: str, years: Iterable[int], values: np.ndarray, t0: int
    ) -> "GapSeries":
        years = tuple(int(y) for y in years)
        values = np.asarray(values, dtype=np.float64)
        if values.shape != (len(years),):
            raise ValueError("gap values must align with years")
        pre = values[[i for i, y in enumerate(years) if y <= t0]]
        post = values[[i for i, y in enumerate(years) if y > t0]]
        rmse_pre = float(np.sqrt(np.mean(pre**2))) if pre.size else float("nan")
        rmse_post = float(np.sqrt(np.mean(post**2))) if post.size else float("nan")
        return cls(region, outcome, years, values, int(t0), rmse_pre, rmse_post)

    def value_map(self) -> dict[int, float]:
        return {y: float(v) for y, v in zip(self.years, self.values)}

    @property
    def pre_values(self) -> np.ndarray:
        return self.values[[i for i, y in enumerate(self.years) if y <= self.t0]]

    @property
    def post_values(self) -> np.ndarray:
        return self.values[[i for i, y in enumerate(self.years) if y > self.t0]]


@dataclass(frozen=True)
class TreatmentSummary:
    """Counts produced by :func:`validate_treatment`."""

    n_treated: int
    n_donors: int
    n_pre: int
    n_post: int
    t0: int
    first_year: int
    last_year: int
    n_outcomes: int
    n_rows: int


@dataclass(frozen=True)
class ColumnSchema:
    """Column-name mapping for the long-form input file.

    ``outcomes`` and ``covariates`` name the value columns explicitly;
    when omitted, outcome columns default to the standard six that are
    present in the header and every remaining unrecognized column is
    read as an extra numeric covariate.
    """

    region: str = "region"
    name: str = "name"
    country: str = "country"
    treated: str = "treated"
    year: str = "year"
    climate: str = CLIMATE_FIELD
    outcomes: tuple[str, ...] | None = None
    covariates: tuple[str, ...] | None = None


def _parse_float(text: str, where: str) -> float:
    try:
        value = float(text)
    except ValueError:
        raise NonFinite(f"{where}: cannot parse {text!r} as a number") from None
    if not math.isfinite(value):
        raise NonFinite(f"{where}: non-finite value {text!r}")
    return value


def _parse_bool(text: str, where: str) -> bool:
    lowered = text.strip().lower()
    if lowered in _TRUE_STRINGS:
        return True
    if lowered in _FALSE_STRINGS:
        return False
    raise NonFinite(f"{where}: cannot parse {text!r} as a boolean flag")


def ingest_panel(
    path: str, t0: int, schema: ColumnSchema | None = None
) -> PanelDataset:
    """Read a long-form CSV panel and return a validated :class:`PanelDataset`.

    One row per (region, year).  Raises :class:`MissingCell`,
    :class:`NonFinite`, :class:`DuplicateRow`, or
    :class:`InconsistentCovariate` with the offending location; never
    imputes.  ``t0`` comes from run configuration, not the data file.
    """
    schema = schema or ColumnSchema()
    with open(path, newline="", encoding="utf-8") as handle:
        reader = csv.DictReader(handle)
        if reader.fieldnames is None:
            raise MissingCell(f"{path}: empty file")
        header = list(reader.fieldnames)
        rows = list(reader)
    required = [schema.region, schema.country, schema.treated, schema.year]
    for column in required:
        if column not in header:
            raise MissingCell(f"{path}: required column {column!r} missing from header")
    if schema.outcomes is not None:
        outcome_cols = tuple(schema.outcomes)
        for column in outcome_cols:
            if column not in header:
                raise MissingCell(f"{path}: outcome column {column!r} missing")
    else:
        outcome_cols = tuple(o for o in DEFAULT_OUTCOMES if o in header)
        if not outcome_cols:
            raise ConfigError(
                f"{path}: no outcome columns found; pass an explicit schema"
            )
    known = set(required) | set(outcome_cols) | {schema.name, schema.climate}
    if schema.covariates is not None:
        covariate_cols = tuple(schema.covariates)
        for column in covariate_cols:
            if column not in header:
                raise MissingCell(f"{path}: covariate column {column!r} missing")
    else:
        standard = tuple(c for c in GEO_NUMERIC_FIELDS if c in header)
        extras = tuple(c for c in header if c not in known and c not in standard)
        covariate_cols = standard + extras
    has_name = schema.name in header
    has_climate = schema.climate in header

    cells: dict[tuple[str, int], dict[str, str]] = {}
    region_order: list[str] = []
    for line_no, row in enumerate(rows, start=2):
        code = (row.get(schema.region) or "").strip()
        if not code:
            raise MissingCell(f"{path}:{line_no}: empty region code")
        year_text = (row.get(schema.year) or "").strip()
        try:
            year = int(year_text)
        except ValueError:
            raise NonFinite(
                f"{path}:{line_no}: cannot parse year {year_text!r}"
            ) from None
        key = (code, year)
        if key in cells:
            raise DuplicateRow(f"{path}:{line_no}: duplicate row for region {code!r}, year {year}")
        if code not in region_order:
            region_order.append(code)
        cells[key] = row

    if not cells:
        raise MissingCell(f"{path}: no data rows")
    years = sorted({year for _, year in cells})
    full_years = tuple(range(years[0], years[-1] + 1))
    for code in region_order:
        for year in full_years:
            if (code, year) not in cells:
                raise MissingCell(f"{path}: region {code!r} has no row for year {year}")

    regions: list[RegionId] = []
    covariates: dict[str, GeoCovariates] = {}
    values = np.empty((len(region_order), len(outcome_cols), len(full_years)))
    for r, code in enumerate(region_order):
        first: dict[str, object] | None = None
        for y, year in enumerate(full_years):
            row = cells[(code, year)]
            where = f"{path}: region {code!r}, year {year}"
            for o, outcome in enumerate(outcome_cols):
                text = (row.get(outcome) or "").strip()
                if not text:
                    raise MissingCell(f"{where}: empty cell for outcome {outcome!r}")
                values[r, o, y] = _parse_float(text, f"{where}, outcome {outcome!r}")
            constant: dict[str, object] = {
                "country": (row.get(schema.country) or "").strip(),
                "treated": _parse_bool(row.get(schema.treated) or "", where),
                "name": (row.get(schema.name) or "").strip() if has_name else code,
                "climate": (row.get(schema.climate) or "").strip() if has_climate else "",
            }
            for column in covariate_cols:
                text = (row.get(column) or "").strip()
                if not text:
                    raise MissingCell(f"{where}: empty cell for covariate {column!r}")
                constant[column] = _parse_float(text, f"{where}, covariate {column!r}")
            if first is None:
                first = constant
            elif constant != first:
                diff = sorted(k for k in constant if constant[k] != first[k])
                raise InconsistentCovariate(
                    f"{path}: region {code!r} varies over time in {diff}"
                )
        assert first is not None
        standard = {
            name: float(first.get(name, 0.0)) for name in GEO_NUMERIC_FIELDS
        }
        for name in GEO_NUMERIC_FIELDS:
            if name not in covariate_cols:
                standard[name] = 0.0
        extra = tuple(
            (name, float(first[name]))
            for name in covariate_cols
            if name not in GEO_NUMERIC_FIELDS
        )
        regions.append(
            RegionId(
                code=code,
                name=str(first["name"]) or code,
                country=str(first["country"]),
                treated=bool(first["treated"]),
            )
        )
        covariates[code] = GeoCovariates(
            climate_zone=str(first["climate"]), extra=extra, **standard
        )
    return PanelDataset(
        regions=tuple(regions),
        outcomes=outcome_cols,
        years=full_years,
        values=values,
        covariates=covariates,
        t0=t0,
    )


def validate_treatment(ds: PanelDataset) -> TreatmentSummary:
    """Check the treatment design and return its counts.

    Requires at least one treated region, :data:`MIN_DONORS` donors,
    :data:`MIN_PRE_PERIODS` pre-treatment years, and one post year.
    """
    n_treated = len(ds.treated_codes)
    n_donors = len(ds.donor_codes)
    n_pre = len(ds.pre_years)
    n_post = len(ds.post_years)
    if n_treated == 0:
        raise ConfigError("no region is flagged treated")
    if n_donors < MIN_DONORS:
        raise EmptyDonorPool(
            f"need at least {MIN_DONORS} never-treated regions, have {n_donors}"
        )
    if n_pre < MIN_PRE_PERIODS:
        raise NoPrePeriod(
            f"t0={ds.t0} leaves {n_pre} pre-treatment year(s); need {MIN_PRE_PERIODS}"
        )
    if n_post < 1:
        raise NoPostPeriod(f"t0={ds.t0} leaves no post-treatment years")
    return TreatmentSummary(
        n_treated=n_treated,
        n_donors=n_donors,
        n_pre=n_pre,
        n_post=n_post,
        t0=ds.t0,
        first_year=ds.years[0],
        last_year=ds.years[-1],
        n_outcomes=ds.n_outcomes,
        n_rows=ds.n_rows,
    )
