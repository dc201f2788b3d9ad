"""Counterfactual path estimation via weighted donor combinations.

A treated region's counterfactual is a convex combination of donor
regions chosen so that pre-treatment predictors match.  The donor
weights W solve an exact quadratic program for a given diagonal
predictor-importance matrix V; V itself is chosen by derivative-free
search to minimize held-out pre-treatment outcome error.  Post-treatment
gaps between the observed and counterfactual paths estimate the
treatment effect.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np
from scipy.optimize import minimize

from .errors import (
    ConfigError,
    DonorHullWarning,
    EmptyInput,
    InsufficientDonors,
    NoPrePeriod,
    UnknownPredictor,
    YearMismatch,
)
from .keys import substream
from .panel import GEO_NUMERIC_FIELDS, GapSeries, PanelDataset, RegionId
from .simplexqp import least_squares_weights

# Weight-sum and non-negativity slack tolerated on stored weight maps.
WEIGHT_TOL = 1e-8
# Pre-period fit RMSE above which a fit is flagged as poorly embedded.
DEFAULT_RMSE_WARNING = 0.1
# Total inner-solve budget for the predictor-importance search.
DEFAULT_V_BUDGET = 2000
N_RANDOM_STARTS = 5
# Logit magnitude used for near-vertex starting points of the search.
VERTEX_LOGIT = 4.0


@dataclass(frozen=True)
class PredictorSpec:
    """Which predictors enter the matching problem.

    ``covariates`` defaults to the standard geographic numeric fields;
    ``lag_years`` defaults to every even calendar year in the
    pre-period (falling back to all pre-period years if none is even).
    """

    covariates: tuple[str, ...] | None = None
    lag_years: tuple[int, ...] | None = None


@dataclass(frozen=True)
class DonorWeights:
    """Convex donor weights; non-negative and summing to one."""

    weights: Mapping[str, float]
    objective: float | None = None

    def __post_init__(self) -> None:
        w = dict(self.weights)
        total = math.fsum(w.values())
        if abs(total - 1.0) > WEIGHT_TOL:
            raise ConfigError(f"donor weights sum to {total!r}, expected 1")
        for code, value in w.items():
            if value < -WEIGHT_TOL or not math.isfinite(value):
                raise ConfigError(f"donor weight for {code!r} is {value!r}")
        object.__setattr__(self, "weights", w)

    def __getitem__(self, code: str) -> float:
        return self.weights[code]

    def as_vector(self, donors: Sequence[str]) -> np.ndarray:
        return np.array([self.weights[d] for d in donors])


@dataclass(frozen=True)
class PredictorWeights:
    """Diagonal predictor importances; non-negative with unit trace."""

    diag: Mapping[str, float]
    objective: float | None = None

    def __post_init__(self) -> None:
        d = dict(self.diag)
        total = math.fsum(d.values())
        if abs(total - 1.0) > WEIGHT_TOL:
            raise ConfigError(f"predictor weights sum to {total!r}, expected 1")
        for name, value in d.items():
            if value < -WEIGHT_TOL or not math.isfinite(value):
                raise ConfigError(f"predictor weight for {name!r} is {value!r}")
        object.__setattr__(self, "diag", d)

    def __getitem__(self, name: str) -> float:
        return self.diag[name]

    def as_vector(self, predictors: Sequence[str]) -> np.ndarray:
        try:
            return np.array([self.diag[p] for p in predictors])
        except KeyError as exc:
            raise UnknownPredictor(f"no weight for predictor {exc.args[0]!r}") from exc


@dataclass(frozen=True)
class SynthProblem:
    """Standardized matching problem for one treated region and outcome."""

    treated: RegionId
    donors: tuple[RegionId, ...]
    outcome: str
    predictors: tuple[str, ...]
    x1: np.ndarray
    x0: np.ndarray
    y1_pre: np.ndarray
    y0_pre: np.ndarray
    training_years: tuple[int, ...]
    validation_years: tuple[int, ...]

    def __post_init__(self) -> None:
        k, j = len(self.predictors), len(self.donors)
        if self.x1.shape != (k,) or self.x0.shape != (k, j):
            raise ConfigError("predictor matrices do not match predictor/donor counts")
        if set(self.training_years) & set(self.validation_years):
            raise ConfigError("training and validation years overlap")
        if not self.training_years or not self.validation_years:
            raise NoPrePeriod("training and validation periods must both be nonempty")
        n_pre = len(self.training_years) + len(self.validation_years)
        if self.y1_pre.shape != (n_pre,) or self.y0_pre.shape != (n_pre, j):
            raise ConfigError("pre-period outcome arrays do not match the year split")
        for name, arr in (("x1", self.x1), ("x0", self.x0), ("y1_pre", self.y1_pre), ("y0_pre", self.y0_pre)):
            locked = np.ascontiguousarray(arr, dtype=np.float64)
            locked.setflags(write=False)
            object.__setattr__(self, name, locked)

    @property
    def pre_years(self) -> tuple[int, ...]:
        return tuple(sorted(self.training_years + self.validation_years))

    @property
    def donor_codes(self) -> tuple[str, ...]:
        return tuple(d.code for d in self.donors)


@dataclass(frozen=True)
class SynthSolution:
    """Fitted weights, counterfactual path, and gap series."""

    weights: DonorWeights
    v: PredictorWeights
    synthetic_path: Mapping[int, float]
    gaps: GapSeries
    rmse_pre: float
    rmse_post: float

    def __post_init__(self) -> None:
        object.__setattr__(self, "synthetic_path", dict(self.synthetic_path))


@dataclass(frozen=True)
class AveragePath:
    """Mean gap per year over several fitted units, plus its post-period mean."""

    outcome: str
    years: tuple[int, ...]
    values: np.ndarray
    t0: int
    atet: float
    n_units: int

    def __post_init__(self) -> None:
        values = np.ascontiguousarray(self.values, dtype=np.float64)
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    def value_map(self) -> dict[int, float]:
        return {y: float(v) for y, v in zip(self.years, self.values)}


@dataclass(frozen=True)
class DonorFrequency:
    """How often each donor carries weight across fitted units."""

    counts: Mapping[str, int]
    threshold: float
    weight_tables: Mapping[str, Mapping[str, float]] = field(default_factory=dict)


def default_lag_years(pre_years: Sequence[int]) -> tuple[int, ...]:
    """Even calendar years of the pre-period; all of it if none is even."""
    even = tuple(y for y in pre_years if y % 2 == 0)
    return even if even else tuple(pre_years)


def split_pre_period(pre_years: Sequence[int]) -> tuple[tuple[int, ...], tuple[int, ...]]:
    """First ceil(half) of the pre-period trains; the rest validates."""
    years = tuple(int(y) for y in pre_years)
    if len(years) < 2:
        raise NoPrePeriod(
            f"need at least 2 pre-period years to split, got {len(years)}"
        )
    cut = (len(years) + 1) // 2
    return years[:cut], years[cut:]


def build_problem(
    ds: PanelDataset,
    treated: RegionId | str,
    outcome: str,
    spec: PredictorSpec | None = None,
    donor_codes: Sequence[str] | None = None,
) -> SynthProblem:
    """Assemble the standardized matching problem for one treated unit.

    Predictors are pre-period outcome values at the requested lag years
    plus numeric covariates, each standardized to zero mean and unit
    variance across the treated unit and its donors.  Constant
    predictors carry no matching information and are dropped.
    """
    spec = spec or PredictorSpec()
    code = treated.code if isinstance(treated, RegionId) else str(treated)
    treated_region = ds.region(code)
    if donor_codes is None:
        donor_codes = tuple(c for c in ds.donor_codes if c != code)
    else:
        donor_codes = tuple(donor_codes)
        if code in donor_codes:
            raise ConfigError(f"treated region {code!r} cannot be its own donor")
    if len(donor_codes) < 2:
        raise InsufficientDonors(
            f"need at least 2 donors for {code!r}, got {len(donor_codes)}"
        )
    donors = tuple(ds.region(c) for c in donor_codes)
    ds.outcome_index(outcome)
    pre = ds.pre_years
    training, validation = split_pre_period(pre)

    lag_years = spec.lag_years if spec.lag_years is not None else default_lag_years(pre)
    lag_years = tuple(int(y) for y in lag_years)
    for y in lag_years:
        if y not in pre:
            raise UnknownPredictor(
                f"outcome lag year {y} is outside the pre-period {pre[0]}..{pre[-1]}"
            )
    if spec.covariates is None:
        covariates = GEO_NUMERIC_FIELDS
    else:
        covariates = tuple(spec.covariates)
        known = ds.covariates[code].numeric_names()
        for name in covariates:
            if name not in known:
                raise UnknownPredictor(f"unknown covariate predictor {name!r}")
    names: list[str] = [f"{outcome}[{y}]" for y in lag_years]
    names.extend(covariates)

    units = (code,) + donor_codes
    raw = np.empty((len(names), len(units)))
    for col, unit in enumerate(units):
        row = 0
        for y in lag_years:
            raw[row, col] = ds.value(unit, outcome, y)
            row += 1
        cov = ds.covariates[unit]
        for name in covariates:
            raw[row, col] = cov.get(name)
            row += 1
    means = raw.mean(axis=1)
    stds = raw.std(axis=1)
    keep = stds > 1e-12
    if not np.any(keep):
        raise UnknownPredictor("every requested predictor is constant across units")
    standardized = (raw[keep] - means[keep, None]) / stds[keep, None]
    kept_names = tuple(n for n, k in zip(names, keep) if k)

    y_index = [ds.year_index(y) for y in pre]
    o = ds.outcome_index(outcome)
    y1 = ds.values[ds.region_index(code), o, y_index]
    y0 = np.stack(
        [ds.values[ds.region_index(c), o, y_index] for c in donor_codes], axis=1
    )
    return SynthProblem(
        treated=treated_region,
        donors=donors,
        outcome=outcome,
        predictors=kept_names,
        x1=standardized[:, 0].copy(),
        x0=standardized[:, 1:].copy(),
        y1_pre=y1,
        y0_pre=y0,
        training_years=training,
        validation_years=validation,
    )


def solve_w_given_v(prob: SynthProblem, v: PredictorWeights) -> DonorWeights:
    """Donor weights minimizing the V-weighted predictor mismatch.

    Solved exactly as a convex quadratic program on the simplex; the
    achieved weighted squared error is recorded on the result.
    """
    v_vec = v.as_vector(prob.predictors)
    sol = least_squares_weights(prob.x1, prob.x0, v_vec)
    return DonorWeights(
        weights=dict(zip(prob.donor_codes, map(float, sol.weights))),
        objective=sol.objective,
    )


def _validation_mse(prob: SynthProblem, w: np.ndarray) -> float:
    pre = prob.pre_years
    mask = [i for i, y in enumerate(pre) if y in prob.validation_years]
    resid = prob.y1_pre[mask] - prob.y0_pre[mask] @ w
    return float(np.mean(resid * resid))


def _xspace_sse(prob: SynthProblem, w: np.ndarray) -> float:
    resid = prob.x1 - prob.x0 @ w
    return float(resid @ resid)


def solve_v(
    prob: SynthProblem,
    seed: int = 0,
    budget: int = DEFAULT_V_BUDGET,
    criterion: str = "validation",
) -> tuple[PredictorWeights, DonorWeights]:
    """Search predictor importances V; return the best (V, W) pair.

    For each candidate V the inner program yields W(V); V is scored by
    the mean squared error of the implied counterfactual outcome over
    the validation years (``criterion="validation"``, the default) or
    by the unweighted predictor-space error (``criterion="xspace"``).
    The search is Nelder-Mead over a softmax parameterization with one
    start at uniform V and five near-vertex random starts sharing the
    evaluation budget; randomness is keyed by (seed, treated, outcome).
    """
    if criterion not in ("validation", "xspace"):
        raise ConfigError(f"unknown outer criterion {criterion!r}")
    if budget < 1:
        raise ConfigError("evaluation budget must be positive")
    k = len(prob.predictors)
    score = _validation_mse if criterion == "validation" else _xspace_sse

    def evaluate(v_vec: np.ndarray) -> tuple[float, DonorWeights]:
        pw = PredictorWeights(diag=dict(zip(prob.predictors, map(float, v_vec))))
        dw = solve_w_given_v(prob, pw)
        return score(prob, dw.as_vector(prob.donor_codes)), dw

    if k == 1:
        v_vec = np.array([1.0])
        obj, dw = evaluate(v_vec)
        return (
            PredictorWeights(diag={prob.predictors[0]: 1.0}, objective=obj),
            dw,
        )

    best: dict[str, object] = {}

    def consider(v_vec: np.ndarray) -> float:
        obj, dw = evaluate(v_vec)
        if not best or obj < best["objective"]:  # type: ignore[operator]
            best.update(objective=obj, v=v_vec.copy(), w=dw)
        return obj

    def from_logits(z: np.ndarray) -> np.ndarray:
        logits = np.concatenate([[0.0], np.asarray(z, dtype=np.float64)])
        logits -= logits.max()
        expd = np.exp(logits)
        return expd / expd.sum()

    def objective(z: np.ndarray) -> float:
        return consider(from_logits(z))

    rng = substream(seed, "synth_v", prob.treated.code, prob.outcome)
    starts = [np.zeros(k - 1)]
    for _ in range(N_RANDOM_STARTS):
        vertex = int(rng.integers(k))
        logits = np.zeros(k)
        logits[vertex] = VERTEX_LOGIT
        starts.append(logits[1:] - logits[0])
    per_start = max(1, budget // len(starts))
    for z0 in starts:
        minimize(
            objective,
            z0,
            method="Nelder-Mead",
            options={"maxfev": per_start, "xatol": 1e-8, "fatol": 1e-12},
        )
    v_vec = np.asarray(best["v"], dtype=np.float64)
    v_vec = np.maximum(v_vec, 0.0)
    v_vec /= v_vec.sum()
    pw = PredictorWeights(
        diag=dict(zip(prob.predictors, map(float, v_vec))),
        objective=float(best["objective"]),  # type: ignore[arg-type]
    )
    return pw, best["w"]  # type: ignore[return-value]


def fit_synth(
    ds: PanelDataset,
    treated: RegionId | str,
    outcome: str,
    spec: PredictorSpec | None = None,
    seed: int = 0,
    budget: int = DEFAULT_V_BUDGET,
    criterion: str = "validation",
    donor_codes: Sequence[str] | None = None,
    rmse_warning: float = DEFAULT_RMSE_WARNING,
) -> SynthSolution:
    """Fit the full counterfactual for one treated unit and outcome.

    Builds the matching problem, runs the nested weight search, and
    returns the year-by-year counterfactual with observed-minus-
    counterfactual gaps.  A pre-period RMSE above ``rmse_warning``
    raises a non-fatal :class:`DonorHullWarning`.
    """
    prob = build_problem(ds, treated, outcome, spec=spec, donor_codes=donor_codes)
    pw, dw = solve_v(prob, seed=seed, budget=budget, criterion=criterion)
    w = dw.as_vector(prob.donor_codes)
    o = ds.outcome_index(outcome)
    donor_rows = np.stack(
        [ds.values[ds.region_index(c), o, :] for c in prob.donor_codes]
    )
    synthetic = w @ donor_rows
    observed = ds.values[ds.region_index(prob.treated.code), o, :]
    gaps = GapSeries.from_values(
        region=prob.treated.code,
        outcome=outcome,
        years=ds.years,
        values=observed - synthetic,
        t0=ds.t0,
    )
    if math.isfinite(gaps.rmse_pre) and gaps.rmse_pre > rmse_warning:
        warnings.warn(
            f"pre-period fit RMSE {gaps.rmse_pre:.4f} for {prob.treated.code!r} "
            f"({outcome}) exceeds {rmse_warning}; the unit may sit outside the "
            "donor hull",
            DonorHullWarning,
            stacklevel=2,
        )
    return SynthSolution(
        weights=dw,
        v=pw,
        synthetic_path={int(y): float(s) for y, s in zip(ds.years, synthetic)},
        gaps=gaps,
        rmse_pre=gaps.rmse_pre,
        rmse_post=gaps.rmse_post,
    )


def average_treatment_path(solutions: Iterable[SynthSolution]) -> AveragePath:
    """Unweighted mean gap per year, plus its mean over post-treatment years."""
    sols = list(solutions)
    if not sols:
        raise EmptyInput("no solutions to average")
    first = sols[0].gaps
    for sol in sols[1:]:
        if sol.gaps.years != first.years or sol.gaps.outcome != first.outcome:
            raise YearMismatch(
                "solutions disagree on year range or outcome; cannot average"
            )
        if sol.gaps.t0 != first.t0:
            raise YearMismatch("solutions disagree on the treatment year")
    stacked = np.stack([sol.gaps.values for sol in sols])
    mean_path = stacked.mean(axis=0)
    post = [i for i, y in enumerate(first.years) if y > first.t0]
    atet = float(mean_path[post].mean()) if post else float("nan")
    return AveragePath(
        outcome=first.outcome,
        years=first.years,
        values=mean_path,
        t0=first.t0,
        atet=atet,
        n_units=len(sols),
    )


def donor_frequency(
    solutions: Iterable[SynthSolution], threshold: float = 0.01
) -> DonorFrequency:
    """Count, per donor, the fitted units giving it weight above threshold."""
    if threshold < 0:
        raise ConfigError(f"threshold must be non-negative, got {threshold!r}")
    counts: dict[str, int] = {}
    tables: dict[str, dict[str, float]] = {}
    for sol in solutions:
        treated_code = sol.gaps.region
        tables[treated_code] = {
            code: float(w) for code, w in sol.weights.weights.items()
        }
        for code, w in sol.weights.weights.items():
            if w > threshold:
                counts[code] = counts.get(code, 0) + 1
    return DonorFrequency(counts=counts, threshold=float(threshold), weight_tables=tables)
