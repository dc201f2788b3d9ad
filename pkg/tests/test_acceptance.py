"""End-to-end acceptance checks, one per contract, printed pass lines.

Each test verifies one shipping requirement at its stated tolerance and
runtime budget and prints a single summary line on success.  Run with
``pytest tests/test_acceptance.py -v`` to see one pass/fail line per
requirement.
"""

from __future__ import annotations

import math
import time
import warnings
from pathlib import Path

import numpy as np
import pytest

from synthpanel import (
    ANNUAL_PHI,
    DegenerateWeightsWarning,
    DgpConfig,
    FitDiagnostics,
    GapSeries,
    PredictorSpec,
    ResidualSeries,
    SamplerConfig,
    SmoothResult,
    TargetDensity,
    average_treatment_path,
    constant_effect,
    fit_synth,
    generate,
    hp_filter,
    ks_statistic,
    least_squares_weights,
    mh_chain,
    placebo_did,
    placebo_run,
    smooth_panel,
    weighted_p,
)
from synthpanel.cli import main as cli_main

from test_simplexqp import exchange_descent


# --------------------------------------------------------------------------
# 1. trend filter agrees with an independent dense solve
# --------------------------------------------------------------------------


def test_trend_filter_matches_dense_solve_under_one_second():
    rng = np.random.default_rng(101)
    n = 25
    d = np.zeros((n - 2, n))
    for i in range(n - 2):
        d[i, i : i + 3] = (1.0, -2.0, 1.0)
    penalty = np.eye(n) + ANNUAL_PHI * d.T @ d

    series = [rng.normal(scale=rng.uniform(0.5, 3.0), size=n) for _ in range(100)]
    elapsed = 0.0
    worst = 0.0
    for y in series:
        start = time.perf_counter()
        result = hp_filter(y, ANNUAL_PHI)
        elapsed += time.perf_counter() - start
        oracle = np.linalg.solve(penalty, y)
        worst = max(worst, float(np.abs(result.trend - oracle).max()))
    assert worst <= 1e-8, f"max deviation {worst:.3e} exceeds 1e-8"
    assert elapsed < 1.0, f"filter calls took {elapsed:.2f}s, budget 1s"

    y = rng.normal(size=n)
    np.testing.assert_array_equal(hp_filter(y, 0.0).trend, y)
    line = 3.0 - 0.25 * np.arange(n)
    fixed = hp_filter(line, ANNUAL_PHI).trend
    assert float(np.abs(fixed - line).max()) <= 1e-10

    print(
        f"PASS trend filter: 100 series max dev {worst:.2e} <= 1e-8 "
        f"in {elapsed * 1000:.0f} ms; identity and linear fixed point exact"
    )


# --------------------------------------------------------------------------
# 2. inner weight solver is optimal against grid search
# --------------------------------------------------------------------------


def _grid_enumerate(h: np.ndarray, c: np.ndarray, step: float) -> float:
    """Exhaustive simplex grid minimum of 0.5 w'hw + c'w (small n only)."""
    n = h.shape[0]
    units = round(1.0 / step)
    best = math.inf
    if n == 1:
        return 0.5 * float(h[0, 0]) + float(c[0])
    if n == 2:
        for i in range(units + 1):
            w = np.array([i, units - i]) / units
            best = min(best, float(0.5 * w @ h @ w + c @ w))
        return best
    for i in range(units + 1):
        for j in range(units + 1 - i):
            w = np.array([i, j, units - i - j]) / units
            best = min(best, float(0.5 * w @ h @ w + c @ w))
    return best


def test_inner_weight_solver_within_tolerance_of_grid_search():
    rng = np.random.default_rng(202)
    start = time.perf_counter()

    worst_gap = -math.inf
    for _ in range(200):
        k = int(rng.integers(2, 7))  # K <= 6
        j = int(rng.integers(2, 9))  # J <= 8
        a = rng.normal(size=(k, j))
        b = rng.normal(size=k)
        v = rng.uniform(0.2, 2.0, size=k)
        sol = least_squares_weights(b, a, v)
        h = 2.0 * a.T @ (v[:, None] * a)
        c = -2.0 * a.T @ (v * b)
        offset = float(b @ (v * b))
        if j <= 3:
            f_grid = _grid_enumerate(h, c, 0.005) + offset
        else:
            w_grid = exchange_descent(h, c, step=0.005)
            f_grid = float(0.5 * w_grid @ h @ w_grid + c @ w_grid) + offset
        worst_gap = max(worst_gap, sol.objective - f_grid)
        assert sol.objective <= f_grid + 1e-6, (
            f"solver objective {sol.objective!r} exceeds grid optimum "
            f"{f_grid!r} + 1e-6 (K={k}, J={j})"
        )

    worst_recovery = 0.0
    for _ in range(60):
        j = int(rng.integers(2, 7))
        a = rng.normal(size=(6, j))
        planted = rng.dirichlet(np.full(j, 4.0))
        sol = least_squares_weights(a @ planted, a, np.ones(6))
        worst_recovery = max(
            worst_recovery, float(np.abs(sol.weights - planted).max())
        )
    assert worst_recovery <= 1e-6, f"planted-weight error {worst_recovery:.3e}"

    elapsed = time.perf_counter() - start
    assert elapsed < 30.0, f"took {elapsed:.1f}s, budget 30s"
    print(
        f"PASS inner weight solver: 200 instances within 1e-6 of grid "
        f"(worst margin {worst_gap:+.2e}), planted weights to "
        f"{worst_recovery:.2e}, {elapsed:.1f}s"
    )


# --------------------------------------------------------------------------
# 3. planted average effect recovered across 100 generator seeds
# --------------------------------------------------------------------------


def test_planted_average_effect_recovered_across_seeds():
    start = time.perf_counter()
    planted = -0.39
    spec = PredictorSpec(covariates=())
    atets = []
    for seed in range(100):
        cfg = DgpConfig(
            n_treated=26,
            n_donors=60,
            years=(2000, 2024),
            t0=2011,  # twelfth year of the panel
            noise_sd=0.05,
            planted_effect=constant_effect(planted, 2011, 2024),
            outcomes=("q",),
            seed=seed,
        )
        ds, _ = generate(cfg)
        fits = [
            fit_synth(
                ds, code, "q", spec=spec, budget=18, seed=0, rmse_warning=math.inf
            )
            for code in ds.treated_codes
        ]
        atets.append(average_treatment_path(fits).atet)
    elapsed = time.perf_counter() - start

    mean_atet = float(np.mean(atets))
    assert abs(mean_atet - planted) <= 0.03, (
        f"mean post-period gap {mean_atet:+.4f} not within 0.03 of {planted}"
    )
    assert elapsed < 300.0, f"took {elapsed:.0f}s, budget 300s"
    print(
        f"PASS planted effect: mean atet {mean_atet:+.4f} vs {planted} over "
        f"100 seeds (spread {np.std(atets):.4f}), {elapsed:.0f}s"
    )


# --------------------------------------------------------------------------
# 4. rank p-value is valid under the exchangeable null
# --------------------------------------------------------------------------


def test_rank_p_value_super_uniform_under_exchangeable_null():
    start = time.perf_counter()
    spec = PredictorSpec(covariates=())
    j = 19
    hits = 0
    trials = 500
    for seed in range(trials):
        cfg = DgpConfig(
            n_treated=1,
            n_donors=j,
            years=(2000, 2009),
            t0=2005,
            noise_sd=0.05,
            loading_mode="exchangeable",
            planted_effect={},
            outcomes=("q",),
            seed=seed,
        )
        ds, _ = generate(cfg)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            inference = placebo_run(ds, "q", spec=spec, budget=6, seed=0)
        if inference.p_exact["T01"] <= 0.05:
            hits += 1
    rate = hits / trials
    bound = 0.05 + 1.0 / (j + 1)
    assert rate <= bound, f"Pr(p <= 0.05) = {rate:.4f} exceeds {bound:.4f}"

    # equal pre-period fit collapses the closeness weights to uniform, so
    # the weighted p-value must equal the plain placebo share
    rng = np.random.default_rng(404)
    worst = 0.0

    def diag(post: float) -> FitDiagnostics:
        return FitDiagnostics(rmse_pre=1.0, rmse_post=post, ratio=post * post)

    for _ in range(100):
        ratios = rng.exponential(size=j + 1)
        treated = diag(float(ratios[0]))
        placebos = [diag(float(r)) for r in ratios[1:]]
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", DegenerateWeightsWarning)
            wp = weighted_p(treated, placebos)
        share = sum(1 for p in placebos if p.ratio >= treated.ratio) / j
        worst = max(worst, abs(wp - share))
    assert worst <= 1e-12, f"uniform-weight reduction off by {worst:.2e}"

    elapsed = time.perf_counter() - start
    print(
        f"PASS permutation validity: Pr(p<=0.05) = {rate:.3f} <= {bound:.3f} "
        f"over {trials} panels (J={j}); uniform-weight reduction exact to "
        f"{worst:.1e}; {elapsed:.0f}s"
    )


# --------------------------------------------------------------------------
# 5. sampler calibrated on a standard-normal target at default settings
# --------------------------------------------------------------------------


def test_sampler_calibrated_on_standard_normal_target():
    target = TargetDensity(
        log_density=lambda x: -0.5 * np.asarray(x) ** 2, name="std_normal"
    )
    result = mh_chain(target, init=0.0, cfg=SamplerConfig(seed=0))
    assert len(result.draws) == 12500 - 2500
    se = 1.0 / math.sqrt(result.ess)
    mean = float(result.draws.mean())
    var = float(result.draws.var())
    assert abs(mean) <= 4 * se, f"mean {mean:+.4f} beyond 4 se ({4 * se:.4f})"
    assert abs(var - 1.0) <= 0.10, f"variance {var:.4f} off unity by >10%"
    assert 0.20 <= result.acceptance_rate <= 0.40

    years = (2000, 2001)
    resid = {
        code: ResidualSeries(
            region=code,
            outcome="q",
            years=years,
            values=np.array([0.7, -0.2]),
            predicted=np.zeros(2),
            observed=np.array([0.7, -0.2]),
        )
        for code in ("R00", "R01", "R02")
    }
    smoothed: SmoothResult = smooth_panel(resid, SamplerConfig(seed=1))
    for code in resid:
        for year, obs in zip(years, (0.7, -0.2)):
            cell = smoothed[(code, year)]
            assert abs(cell.mean - obs) <= 1e-6, (
                f"degenerate-scale mean {cell.mean!r} drifted from {obs}"
            )

    print(
        f"PASS sampler: mean {mean:+.4f} (4se {4 * se:.4f}), var {var:.4f}, "
        f"acceptance {result.acceptance_rate:.3f} in [0.20, 0.40]; "
        f"degenerate scale returns observations to 1e-6"
    )


# --------------------------------------------------------------------------
# 6. stacked regression identity and confidence-interval coverage
# --------------------------------------------------------------------------


def _gap(code: str, years, values, t0) -> GapSeries:
    return GapSeries.from_values(
        region=code,
        outcome="q",
        years=years,
        values=np.asarray(values, dtype=np.float64),
        t0=t0,
    )


def test_stacked_regression_identity_and_coverage():
    rng = np.random.default_rng(606)
    years = tuple(range(2000, 2012))
    t0 = 2005
    pre = [i for i, y in enumerate(years) if y <= t0]
    post = [i for i, y in enumerate(years) if y > t0]

    worst = 0.0
    for _ in range(20):
        n_treated = int(rng.integers(2, 6))
        n_control = int(rng.integers(5, 11))
        gaps = [
            _gap(f"R{i:02d}", years, rng.normal(size=len(years)), t0)
            for i in range(n_treated + n_control)
        ]
        treated = [g.region for g in gaps[:n_treated]]
        result = placebo_did(gaps, treated)
        tr = np.stack([g.values for g in gaps[:n_treated]])
        ct = np.stack([g.values for g in gaps[n_treated:]])
        dd = (tr[:, post].mean() - tr[:, pre].mean()) - (
            ct[:, post].mean() - ct[:, pre].mean()
        )
        worst = max(worst, abs(result.coefficient - dd))
    assert worst <= 1e-10, f"identity violated by {worst:.2e}"

    covered = 0
    effect = -0.4
    for run in range(100):
        run_rng = np.random.default_rng(6000 + run)
        gaps = []
        for i in range(25):
            noise = run_rng.normal(scale=0.1, size=len(years))
            if i < 6:
                noise[post] += effect
            gaps.append(_gap(f"R{i:02d}", years, noise, t0))
        result = placebo_did(gaps, [f"R{i:02d}" for i in range(6)])
        lo, hi = result.ci95
        if lo <= effect <= hi:
            covered += 1
    assert covered >= 93, f"CI covered planted effect in only {covered}/100 runs"

    print(
        f"PASS stacked regression: identity to {worst:.1e}; planted -0.4 "
        f"covered by the 95% interval in {covered}/100 runs"
    )


# --------------------------------------------------------------------------
# 7. distribution-distance statistic matches brute force
# --------------------------------------------------------------------------


def test_distribution_distance_matches_brute_force():
    from synthpanel import kolmogorov_pvalue

    rng = np.random.default_rng(707)
    for _ in range(200):
        na = int(rng.integers(2, 12))
        nb = int(rng.integers(2, 12))
        a = np.round(rng.normal(size=na), int(rng.integers(0, 3)))
        b = np.round(rng.normal(size=nb), int(rng.integers(0, 3)))
        d = ks_statistic(a, b)
        points = np.concatenate([a, b])
        brute = max(
            abs((a <= x).mean() - (b <= x).mean()) for x in points
        )
        assert d == brute, f"D {d!r} != brute force {brute!r}"

    same = np.array([1.0, 2.0, 3.0])
    d_same = ks_statistic(same, same.copy())
    p_same = kolmogorov_pvalue(d_same, 3, 3)
    assert (d_same, p_same) == (0.0, 1.0)
    assert ks_statistic(np.array([0.0, 1.0]), np.array([5.0, 6.0, 7.0])) == 1.0

    print(
        "PASS distribution distance: 200 random pairs match brute-force "
        "sup-difference exactly; identical -> (0, 1); disjoint -> D = 1"
    )


# --------------------------------------------------------------------------
# 8 + 9. bundled demonstration pipeline: determinism and table layout
# --------------------------------------------------------------------------

DEMO_CONFIG = Path(__file__).resolve().parent.parent / "demos" / "demo_config.json"


@pytest.fixture(scope="module")
def demo_runs(tmp_path_factory):
    base = tmp_path_factory.mktemp("demo")
    timings = []
    dirs = []
    for name in ("first", "second"):
        outdir = base / name
        start = time.perf_counter()
        rc = cli_main(["run", "--config", str(DEMO_CONFIG), "--output-dir", str(outdir)])
        timings.append(time.perf_counter() - start)
        assert rc == 0
        dirs.append(outdir)
    return dirs[0], dirs[1], timings[0]


def test_bundled_pipeline_deterministic_within_budget(demo_runs):
    first, second, elapsed = demo_runs
    assert elapsed < 600.0, f"single run took {elapsed:.0f}s, budget 600s"

    rel_first = {p.relative_to(first) for p in first.rglob("*") if p.is_file()}
    rel_second = {p.relative_to(second) for p in second.rglob("*") if p.is_file()}
    assert rel_first == rel_second
    compared = 0
    for rel in sorted(rel_first):
        if rel.name == "manifest.json":  # carries wall-clock timings
            continue
        assert (first / rel).read_bytes() == (second / rel).read_bytes(), (
            f"{rel} differs between identically configured runs"
        )
        compared += 1

    print(
        f"PASS determinism: {compared} artifact files byte-identical across "
        f"two runs of the bundled config; single run {elapsed:.0f}s < 600s"
    )


def test_bundled_pipeline_emits_populated_tables(demo_runs):
    first, _, _ = demo_runs
    report = first / "report"

    balance_files = sorted(report.glob("table1_*.txt"))
    assert balance_files, "no balance tables emitted"
    lag_rows = 0
    for path in balance_files:
        text = path.read_text()
        rows = [line for line in text.splitlines() if line.startswith("Outcome variable in ")]
        assert rows, f"{path.name} lacks per-year outcome rows"
        lag_rows += len(rows)
        assert "treated" in text and "synthetic" in text

    table2 = (report / "table2.txt").read_text()
    assert "coefficient" in table2 and "se_cluster" in table2
    coef_line = next(line for line in table2.splitlines() if line.startswith("coefficient"))
    values = [float(tok) for tok in coef_line.split()[1:]]
    assert values and all(math.isfinite(v) for v in values)

    table3 = (report / "table3.txt").read_text()
    assert "ks_stat" in table3 and "t_pvalue" in table3
    ks_line = next(line for line in table3.splitlines() if line.startswith("ks_stat"))
    assert any(float(tok) > 0 for tok in ks_line.split()[1:])

    print(
        f"PASS table layout: {len(balance_files)} balance tables with "
        f"{lag_rows} per-year outcome rows; stacked-regression and "
        f"group-equality tables populated from the demonstration run"
    )
