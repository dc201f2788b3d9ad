"""Permutation inference and secondary analyses on fitted gap series.

Every donor is refit as if it were treated (with the true treated units
returned to its donor pool), yielding a placebo distribution of gaps and
post/pre error ratios.  Treated-unit p-values come from the rank of the
treated ratio in that distribution; per-year p-values and empirical
confidence bounds come from the year-by-year placebo gap distributions.
Companion analyses: a two-way fixed-effects regression on the stacked
gap panel with cluster-robust errors, two-sample equality tests, and a
principal-component screen of candidate mechanisms.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np
from scipy import stats

from .errors import (
    ConfigError,
    DegenerateVariance,
    DegenerateWeightsWarning,
    EmptyInput,
    NonPositiveScale,
    PlaceboFitWarning,
    SingularDesign,
    SmallDonorPoolWarning,
    SynthPanelError,
    TooFewObservations,
    TooFewPlacebos,
    YearMismatch,
)
from .keys import substream
from .panel import GapSeries, PanelDataset, validate_treatment
from .synth import DEFAULT_V_BUDGET, PredictorSpec, SynthSolution, fit_synth

# Donor pools smaller than this are allowed but flagged.
SMALL_POOL = 5
# Exclusion-rule cutoff: placebos with pre-period RMSE above this multiple
# of the treated unit's are dropped when the rule is enabled.
EXCLUSION_MULTIPLE = 5.0
# Relative floor inside the closeness weights.
WEIGHT_EPS_FACTOR = 0.01
AVERAGE_LABEL = "__average__"


@dataclass(frozen=True)
class FitDiagnostics:
    """Pre/post fit errors and their mean-squared-error ratio."""

    rmse_pre: float
    rmse_post: float
    ratio: float

    @classmethod
    def from_gaps(cls, gaps: GapSeries) -> "FitDiagnostics":
        """Ratio = mean squared post-period gap over mean squared pre-period gap."""
        pre = gaps.pre_values
        post = gaps.post_values
        msq_pre = float(np.mean(pre * pre)) if pre.size else float("nan")
        msq_post = float(np.mean(post * post)) if post.size else float("nan")
        if msq_pre > 0.0:
            ratio = msq_post / msq_pre
        else:
            ratio = math.inf if msq_post > 0.0 else float("nan")
        return cls(
            rmse_pre=math.sqrt(msq_pre) if msq_pre >= 0 else float("nan"),
            rmse_post=math.sqrt(msq_post) if msq_post >= 0 else float("nan"),
            ratio=ratio,
        )


@dataclass(frozen=True)
class PlaceboInference:
    """Everything the placebo permutation pass produces for one outcome."""

    outcome: str
    treated_stats: Mapping[str, FitDiagnostics]
    placebo_stats: Mapping[str, FitDiagnostics]
    p_exact: Mapping[str, float]
    p_weighted: float
    per_period_p: Mapping[int, float]
    bounds: Mapping[int, tuple[float, float]]
    treated_gaps: Mapping[str, GapSeries]
    placebo_gaps: Mapping[str, GapSeries]
    average_gap: GapSeries
    treated_solutions: Mapping[str, SynthSolution] = field(default_factory=dict)
    placebo_solutions: Mapping[str, SynthSolution] = field(default_factory=dict)
    failed: Mapping[str, str] = field(default_factory=dict)
    subset_count: int = 0
    placebo_average_count: int = 0
    level: float = 0.05


@dataclass(frozen=True)
class DidResult:
    """Two-way fixed-effects estimate on a stacked gap panel."""

    coefficient: float
    se_cluster: float
    ci95: tuple[float, float]
    n_obs: int
    n_treated: int
    n_control: int
    r2: float
    degenerate: bool = False


@dataclass(frozen=True)
class EqualityTestResult:
    """Mean-difference and distribution-equality tests for two groups."""

    delta: float
    t_stat: float
    t_pvalue: float
    ks_stat: float
    ks_pvalue: float
    n_group_a: int
    n_group_b: int


@dataclass(frozen=True)
class MechanismEffect:
    """Association of one candidate mechanism with the first component."""

    mechanism: str
    slope: float
    correlation: float
    t_stat: float
    n: int


@dataclass(frozen=True)
class MechanismScreen:
    """First principal component of gaps and its mechanism regressions."""

    loadings: Mapping[str, float]
    scores: Mapping[str, float]
    explained: float
    effects: tuple[MechanismEffect, ...]


def exact_p(treated: FitDiagnostics, placebos: Sequence[FitDiagnostics]) -> float:
    """Rank-based p-value including the treated unit itself.

    Counts the units (treated plus placebos) whose post/pre ratio is at
    least the treated ratio and divides by the pool size J+1, so the
    smallest attainable value is 1/(J+1).
    """
    if not placebos:
        raise EmptyInput("exact_p needs at least one placebo")
    count = 1 + sum(1 for p in placebos if p.ratio >= treated.ratio)
    return count / (len(placebos) + 1)


def weighted_p(
    treated: FitDiagnostics,
    placebos: Sequence[FitDiagnostics],
    exclusion_rule: bool = False,
) -> float:
    """Closeness-weighted placebo p-value.

    Each placebo carries weight proportional to the reciprocal distance
    between its pre-period RMSE and the treated unit's, floored at 1% of
    the treated RMSE so near-identical fits cannot dominate.  With
    ``exclusion_rule`` placebos whose pre-period RMSE exceeds five times
    the treated unit's are dropped before weighting instead.  When every
    weight is equal the value degenerates to the plain placebo share and
    a :class:`DegenerateWeightsWarning` is emitted.
    """
    if not placebos:
        raise EmptyInput("weighted_p needs at least one placebo")
    if not treated.rmse_pre > 0:
        raise NonPositiveScale(
            f"treated pre-period RMSE must be positive, got {treated.rmse_pre!r}"
        )
    for p in placebos:
        if not p.rmse_pre > 0:
            raise NonPositiveScale("every placebo pre-period RMSE must be positive")
    pool = list(placebos)
    if exclusion_rule:
        kept = [p for p in pool if p.rmse_pre <= EXCLUSION_MULTIPLE * treated.rmse_pre]
        if kept:
            pool = kept
        else:
            warnings.warn(
                "exclusion rule removed every placebo; weighting the full pool",
                DegenerateWeightsWarning,
                stacklevel=2,
            )
    eps = WEIGHT_EPS_FACTOR * treated.rmse_pre
    raw = np.array(
        [1.0 / max(abs(p.rmse_pre - treated.rmse_pre), eps) for p in pool]
    )
    if float(raw.max()) - float(raw.min()) <= 1e-15 * float(raw.max()):
        warnings.warn(
            "placebo closeness weights are uniform; weighted p equals the "
            "plain placebo share",
            DegenerateWeightsWarning,
            stacklevel=2,
        )
    weights = raw / raw.sum()
    indicator = np.array([1.0 if p.ratio >= treated.ratio else 0.0 for p in pool])
    return float(weights @ indicator)


def per_period_p(
    treated_gaps: GapSeries, placebo_gaps: Sequence[GapSeries]
) -> dict[int, float]:
    """Per post-year share of placebos with gap magnitude at least the treated's.

    Divides by the number of placebos J, so 0 is attainable when the
    treated gap strictly exceeds every placebo gap that year.
    """
    if not placebo_gaps:
        raise EmptyInput("per_period_p needs at least one placebo gap series")
    for g in placebo_gaps:
        if g.years != treated_gaps.years:
            raise YearMismatch(
                f"placebo {g.region!r} year range differs from the treated series"
            )
    out: dict[int, float] = {}
    j = len(placebo_gaps)
    for i, year in enumerate(treated_gaps.years):
        if year <= treated_gaps.t0:
            continue
        threshold = abs(float(treated_gaps.values[i]))
        count = sum(1 for g in placebo_gaps if abs(float(g.values[i])) >= threshold)
        out[year] = count / j
    return out


def invert_bounds(
    placebo_gaps: Sequence[GapSeries], level: float = 0.05
) -> dict[int, tuple[float, float]]:
    """Empirical per-year gap bounds from the placebo distribution.

    Returns the (level/2, 1 - level/2) quantiles of the placebo gaps for
    each post-treatment year; ``level = 1.0`` degenerates to the median.
    Requires at least 1/level placebo series to be meaningful.
    """
    if not 0.0 < level <= 1.0:
        raise ConfigError(f"level must be in (0, 1], got {level!r}")
    j = len(placebo_gaps)
    if j * level < 1.0 - 1e-12:
        raise TooFewPlacebos(
            f"need at least {math.ceil(1.0 / level)} placebos for level {level}, got {j}"
        )
    first = placebo_gaps[0]
    for g in placebo_gaps[1:]:
        if g.years != first.years or g.t0 != first.t0:
            raise YearMismatch("placebo gap series disagree on years")
    matrix = np.stack([g.values for g in placebo_gaps])
    out: dict[int, tuple[float, float]] = {}
    for i, year in enumerate(first.years):
        if year <= first.t0:
            continue
        lower, upper = np.quantile(matrix[:, i], (level / 2.0, 1.0 - level / 2.0))
        out[year] = (float(lower), float(upper))
    return out


def average_gap_series(
    gap_list: Sequence[GapSeries], label: str = AVERAGE_LABEL
) -> GapSeries:
    """Year-by-year unweighted mean of several gap series."""
    if not gap_list:
        raise EmptyInput("cannot average an empty list of gap series")
    first = gap_list[0]
    for g in gap_list[1:]:
        if g.years != first.years or g.t0 != first.t0:
            raise YearMismatch("gap series disagree on years")
    values = np.stack([g.values for g in gap_list]).mean(axis=0)
    return GapSeries.from_values(
        region=label, outcome=first.outcome, years=first.years, values=values, t0=first.t0
    )


def placebo_run(
    ds: PanelDataset,
    outcome: str,
    spec: PredictorSpec | None = None,
    budget: int = DEFAULT_V_BUDGET,
    subset_averages: int = 0,
    seed: int = 0,
    criterion: str = "validation",
    exclusion_rule: bool = False,
    level: float = 0.05,
    rmse_warning: float = math.inf,
) -> PlaceboInference:
    """Treat every donor in turn and rank the true treated units.

    Each donor is refit as treated against the remaining donors plus the
    true treated units (which re-enter the donor pool for placebo fits).
    A placebo fit that fails is recorded in ``failed`` and excluded with
    a :class:`PlaceboFitWarning`; treated-unit fits must succeed.  With
    ``subset_averages`` > 0, that many random donor subsets of the
    treated-group size are averaged to form the comparison distribution
    for the average treated path; the total number of averaged placebo
    gaps (subsets times post-period years) is reported.  Deterministic
    given ``seed``.
    """
    validate_treatment(ds)
    treated_codes = ds.treated_codes
    donor_codes = ds.donor_codes
    if len(donor_codes) < SMALL_POOL:
        warnings.warn(
            f"donor pool has only {len(donor_codes)} regions; placebo inference "
            "will be coarse",
            SmallDonorPoolWarning,
            stacklevel=2,
        )

    treated_solutions: dict[str, SynthSolution] = {}
    for code in treated_codes:
        treated_solutions[code] = fit_synth(
            ds,
            code,
            outcome,
            spec=spec,
            seed=seed,
            budget=budget,
            criterion=criterion,
            rmse_warning=rmse_warning,
        )
    placebo_solutions: dict[str, SynthSolution] = {}
    failed: dict[str, str] = {}
    for code in donor_codes:
        pool = tuple(c for c in donor_codes if c != code) + treated_codes
        try:
            placebo_solutions[code] = fit_synth(
                ds,
                code,
                outcome,
                spec=spec,
                seed=seed,
                budget=budget,
                criterion=criterion,
                donor_codes=pool,
                rmse_warning=rmse_warning,
            )
        except SynthPanelError as exc:
            failed[code] = f"{type(exc).__name__}: {exc}"
            warnings.warn(
                f"placebo fit for {code!r} failed and was excluded: {exc}",
                PlaceboFitWarning,
                stacklevel=2,
            )

    treated_gaps = {c: s.gaps for c, s in treated_solutions.items()}
    placebo_gaps = {c: s.gaps for c, s in placebo_solutions.items()}
    treated_stats = {c: FitDiagnostics.from_gaps(g) for c, g in treated_gaps.items()}
    placebo_stats = {c: FitDiagnostics.from_gaps(g) for c, g in placebo_gaps.items()}
    placebo_list = list(placebo_gaps.values())
    placebo_diag_list = [placebo_stats[c] for c in placebo_gaps]

    average = average_gap_series(list(treated_gaps.values()))
    average_diag = FitDiagnostics.from_gaps(average)
    p_map = {c: exact_p(treated_stats[c], placebo_diag_list) for c in treated_codes}

    subset_count = 0
    average_count = 0
    comparison_gaps: list[GapSeries] = placebo_list
    comparison_diags: list[FitDiagnostics] = placebo_diag_list
    n_treated = len(treated_codes)
    if subset_averages > 0:
        if len(placebo_list) < n_treated:
            warnings.warn(
                "fewer surviving placebos than treated units; subset averaging "
                "disabled",
                SmallDonorPoolWarning,
                stacklevel=2,
            )
        else:
            rng = substream(seed, "placebo_subsets", outcome)
            subset_gaps: list[GapSeries] = []
            for s in range(subset_averages):
                idx = rng.choice(len(placebo_list), size=n_treated, replace=False)
                subset_gaps.append(
                    average_gap_series(
                        [placebo_list[i] for i in sorted(idx)], label=f"subset[{s}]"
                    )
                )
            subset_count = subset_averages
            average_count = subset_averages * len(ds.post_years)
            comparison_gaps = subset_gaps
            comparison_diags = [FitDiagnostics.from_gaps(g) for g in subset_gaps]

    p_w = weighted_p(average_diag, comparison_diags, exclusion_rule=exclusion_rule)
    per_period = per_period_p(average, placebo_list)
    try:
        bounds = invert_bounds(comparison_gaps, level=level)
    except TooFewPlacebos as exc:
        warnings.warn(
            f"confidence bounds skipped: {exc}", SmallDonorPoolWarning, stacklevel=2
        )
        bounds = {}

    return PlaceboInference(
        outcome=outcome,
        treated_stats=treated_stats,
        placebo_stats=placebo_stats,
        p_exact=p_map,
        p_weighted=p_w,
        per_period_p=per_period,
        bounds=bounds,
        treated_gaps=treated_gaps,
        placebo_gaps=placebo_gaps,
        average_gap=average,
        treated_solutions=treated_solutions,
        placebo_solutions=placebo_solutions,
        failed=failed,
        subset_count=subset_count,
        placebo_average_count=average_count,
        level=level,
    )


def placebo_did(
    gaps: Sequence[GapSeries], treated_codes: Iterable[str]
) -> DidResult:
    """Two-way fixed-effects regression of gaps on a treated-post indicator.

    Region and year effects are removed by double demeaning; the single
    remaining regressor's coefficient equals the difference-in-means of
    post-minus-pre gaps between treated and control groups.  Standard
    errors cluster by region with the usual finite-sample factor, and
    the 95% interval uses the t distribution with (clusters - 1) degrees
    of freedom.
    """
    gap_list = list(gaps)
    if not gap_list:
        raise EmptyInput("placebo_did needs at least one gap series")
    first = gap_list[0]
    codes = [g.region for g in gap_list]
    if len(set(codes)) != len(codes):
        raise ConfigError("duplicate region in stacked gap panel")
    for g in gap_list[1:]:
        if g.years != first.years or g.t0 != first.t0:
            raise YearMismatch("stacked gap panel is not balanced")
    treated_set = set(treated_codes)
    unknown = treated_set - set(codes)
    if unknown:
        raise ConfigError(f"treated codes not in the gap panel: {sorted(unknown)}")
    y = np.stack([g.values for g in gap_list])
    g_count, t_count = y.shape
    is_treated = np.array([c in treated_set for c in codes], dtype=np.float64)
    is_post = np.array([yr > first.t0 for yr in first.years], dtype=np.float64)
    x = np.outer(is_treated, is_post)

    def demean(m: np.ndarray) -> np.ndarray:
        return m - m.mean(axis=1, keepdims=True) - m.mean(axis=0, keepdims=True) + m.mean()

    x_t = demean(x)
    y_t = demean(y)
    sxx = float((x_t * x_t).sum())
    if sxx <= 1e-14:
        raise SingularDesign(
            "treated-post indicator has no within variation (missing treated "
            "units, controls, pre-years, or post-years)"
        )
    coefficient = float((x_t * y_t).sum()) / sxx
    residual = y_t - coefficient * x_t
    cluster_scores = (x_t * residual).sum(axis=1)
    meat = float(cluster_scores @ cluster_scores)
    n = g_count * t_count
    k = g_count + t_count
    if g_count < 2 or n <= k:
        raise SingularDesign(
            f"too few clusters or observations for cluster-robust errors "
            f"(G={g_count}, N={n}, K={k})"
        )
    correction = (g_count / (g_count - 1.0)) * ((n - 1.0) / (n - k))
    variance = correction * meat / (sxx * sxx)
    se = math.sqrt(max(variance, 0.0))
    crit = float(stats.t.ppf(0.975, g_count - 1))
    sst = float((y_t * y_t).sum())
    ssr = float((residual * residual).sum())
    r2 = 1.0 - ssr / sst if sst > 0 else 0.0
    n_treated = int(is_treated.sum())
    return DidResult(
        coefficient=coefficient,
        se_cluster=se,
        ci95=(coefficient - crit * se, coefficient + crit * se),
        n_obs=n,
        n_treated=n_treated,
        n_control=g_count - n_treated,
        r2=r2,
        degenerate=se == 0.0,
    )


def ks_statistic(a: np.ndarray, b: np.ndarray) -> float:
    """Exact two-sample sup-difference of empirical distribution functions."""
    a = np.sort(np.asarray(a, dtype=np.float64))
    b = np.sort(np.asarray(b, dtype=np.float64))
    pooled = np.concatenate([a, b])
    f_a = np.searchsorted(a, pooled, side="right") / a.size
    f_b = np.searchsorted(b, pooled, side="right") / b.size
    return float(np.abs(f_a - f_b).max())


def kolmogorov_pvalue(d: float, n_a: int, n_b: int) -> float:
    """Asymptotic two-sample tail probability for a sup-difference ``d``.

    Uses the alternating series 2 * sum_k (-1)^(k-1) exp(-2 k^2 lam^2)
    with lam = d * sqrt(n_a n_b / (n_a + n_b)); non-positive lam gives 1.
    """
    lam = d * math.sqrt(n_a * n_b / (n_a + n_b))
    if lam <= 0.0:
        return 1.0
    total = 0.0
    for k in range(1, 101):
        term = 2.0 * (-1.0) ** (k - 1) * math.exp(-2.0 * k * k * lam * lam)
        total += term
        if abs(term) < 1e-16:
            break
    return float(min(max(total, 0.0), 1.0))


def group_equality(
    gaps_a: Sequence[float], gaps_b: Sequence[float]
) -> EqualityTestResult:
    """Mean difference with Welch t-test and a two-sample sup-ECDF test."""
    a = np.asarray(list(gaps_a), dtype=np.float64)
    b = np.asarray(list(gaps_b), dtype=np.float64)
    if a.size < 2 or b.size < 2:
        raise TooFewObservations(
            f"each group needs at least 2 values, got {a.size} and {b.size}"
        )
    delta = float(a.mean() - b.mean())
    var_a = float(a.var(ddof=1))
    var_b = float(b.var(ddof=1))
    if var_a + var_b <= 0.0:
        t_stat, t_pvalue = (0.0, 1.0) if delta == 0.0 else (math.inf, 0.0)
        t_stat = math.copysign(t_stat, delta) if delta != 0.0 else 0.0
    else:
        res = stats.ttest_ind(a, b, equal_var=False)
        t_stat, t_pvalue = float(res.statistic), float(res.pvalue)
    d = ks_statistic(a, b)
    return EqualityTestResult(
        delta=delta,
        t_stat=t_stat,
        t_pvalue=t_pvalue,
        ks_stat=d,
        ks_pvalue=kolmogorov_pvalue(d, a.size, b.size),
        n_group_a=int(a.size),
        n_group_b=int(b.size),
    )


def mechanism_screen(
    gaps_by_outcome: Mapping[str, Mapping[str, float]],
    mechanisms: Mapping[str, Mapping[str, float]],
) -> MechanismScreen:
    """Project per-region gaps onto their first principal component and
    regress that component on each candidate mechanism.

    Gap vectors are standardized per outcome; the component is the top
    eigenvector of their correlation matrix, with its sign fixed to
    correlate positively with the mean raw gap.  Each mechanism gets an
    ordinary least-squares slope, Pearson correlation, and t-statistic.
    """
    if not gaps_by_outcome:
        raise EmptyInput("mechanism_screen needs at least one outcome")
    outcomes = sorted(gaps_by_outcome)
    regions = sorted(set.intersection(*(set(gaps_by_outcome[o]) for o in outcomes)))
    if len(regions) < 3:
        raise TooFewObservations(
            f"need at least 3 regions common to all outcomes, got {len(regions)}"
        )
    raw = np.array(
        [[float(gaps_by_outcome[o][r]) for o in outcomes] for r in regions]
    )
    stds = raw.std(axis=0)
    for o, s in zip(outcomes, stds):
        if s <= 1e-12:
            raise DegenerateVariance(f"gap vector for outcome {o!r} is constant")
    z = (raw - raw.mean(axis=0)) / stds
    corr = (z.T @ z) / len(regions)
    eigenvalues, eigenvectors = np.linalg.eigh(corr)
    component = eigenvectors[:, -1]
    scores = z @ component
    mean_gap = raw.mean(axis=1)
    alignment = float(np.dot(scores - scores.mean(), mean_gap - mean_gap.mean()))
    if alignment < 0.0 or (abs(alignment) < 1e-12 and component[0] < 0.0):
        component = -component
        scores = -scores
    explained = float(eigenvalues[-1] / eigenvalues.sum())

    effects = []
    for name in sorted(mechanisms):
        values = mechanisms[name]
        missing = [r for r in regions if r not in values]
        if missing:
            raise ConfigError(
                f"mechanism {name!r} is missing regions {missing[:3]}"
            )
        x = np.array([float(values[r]) for r in regions])
        sx = float(x.std())
        if sx <= 1e-12:
            raise DegenerateVariance(f"mechanism {name!r} is constant across regions")
        xc = x - x.mean()
        yc = scores - scores.mean()
        slope = float(xc @ yc) / float(xc @ xc)
        sy = float(scores.std())
        r = float(xc @ yc) / (len(regions) * sx * sy) if sy > 0 else 0.0
        r = max(min(r, 1.0), -1.0)
        n = len(regions)
        if 1.0 - r * r <= 1e-15:
            t = math.inf if r > 0 else -math.inf
        else:
            t = r * math.sqrt((n - 2) / (1.0 - r * r))
        effects.append(
            MechanismEffect(mechanism=name, slope=slope, correlation=r, t_stat=t, n=n)
        )
    return MechanismScreen(
        loadings={o: float(l) for o, l in zip(outcomes, component)},
        scores={r: float(s) for r, s in zip(regions, scores)},
        explained=explained,
        effects=tuple(effects),
    )
