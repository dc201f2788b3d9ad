"""Deterministic artifact serialization for pipeline runs.

Every writer here is bit-reproducible: floats are rendered with
``repr`` (the shortest string that round-trips exactly), JSON keys are
sorted, and row orders follow the input ordering.  Re-running a
pipeline with identical inputs therefore produces byte-identical
artifact files.
"""

from __future__ import annotations

import csv
import hashlib
import json
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from .hpfilter import TrendResult
from .inference import (
    DidResult,
    EqualityTestResult,
    MechanismScreen,
    PlaceboInference,
)
from .mcmc import SmoothResult
from .panel import CLIMATE_FIELD, GEO_NUMERIC_FIELDS, GapSeries, PanelDataset
from .residualize import ResidualModel, ResidualSeries
from .simulate import GroundTruth
from .synth import AveragePath, SynthSolution


def fmt(value: object) -> str:
    """Render one CSV cell; floats use their shortest exact form."""
    if isinstance(value, (bool, np.bool_)):
        return "1" if value else "0"
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return str(value)


def sha256_file(path: str | Path) -> str:
    """Hex digest of a file's contents."""
    digest = hashlib.sha256()
    with open(path, "rb") as handle:
        for block in iter(lambda: handle.read(1 << 16), b""):
            digest.update(block)
    return digest.hexdigest()


def write_json(obj: object, path: str | Path) -> None:
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as handle:
        json.dump(obj, handle, sort_keys=True, indent=1)
        handle.write("\n")


def read_json(path: str | Path) -> dict:
    with open(path, encoding="utf-8") as handle:
        return json.load(handle)


def write_csv(
    path: str | Path, header: Sequence[str], rows: Iterable[Sequence[object]]
) -> None:
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="") as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([fmt(cell) for cell in row])


# -- panel round-trip -------------------------------------------------------


def write_panel_csv(ds: PanelDataset, path: str | Path) -> None:
    """Write the long-form panel file that :func:`ingest_panel` reads back."""
    first_cov = ds.covariates[ds.regions[0].code]
    extra_names = tuple(name for name, _ in first_cov.extra)
    header = (
        ["region", "name", "country", "treated", "year"]
        + list(ds.outcomes)
        + list(GEO_NUMERIC_FIELDS)
        + [CLIMATE_FIELD]
        + list(extra_names)
    )
    rows = []
    for r, region in enumerate(ds.regions):
        cov = ds.covariates[region.code]
        for t, year in enumerate(ds.years):
            row: list[object] = [
                region.code,
                region.name,
                region.country,
                region.treated,
                year,
            ]
            row.extend(float(ds.values[r, o, t]) for o in range(ds.n_outcomes))
            row.extend(cov.get(name) for name in GEO_NUMERIC_FIELDS)
            row.append(cov.climate_zone)
            row.extend(cov.get(name) for name in extra_names)
            rows.append(row)
    write_csv(path, header, rows)


def gap_record(gaps: GapSeries) -> dict:
    return {
        "region": gaps.region,
        "outcome": gaps.outcome,
        "t0": gaps.t0,
        "years": list(gaps.years),
        "values": [float(v) for v in gaps.values],
        "rmse_pre": gaps.rmse_pre,
        "rmse_post": gaps.rmse_post,
    }


def gap_from_record(record: Mapping) -> GapSeries:
    return GapSeries.from_values(
        region=record["region"],
        outcome=record["outcome"],
        years=record["years"],
        values=np.asarray(record["values"], dtype=np.float64),
        t0=record["t0"],
    )


def write_truth(truth: GroundTruth, path: str | Path) -> None:
    """Ground-truth sidecar for a generated panel."""
    write_json(
        {
            "alpha": {str(y): v for y, v in truth.alpha.items()},
            "weights": {k: dict(v) for k, v in truth.weights.items()},
            "loadings": {k: list(v) for k, v in truth.loadings.items()},
            "deltas": {k: [float(x) for x in v] for k, v in truth.deltas.items()},
            "factors": {
                k: [[float(x) for x in row] for row in v]
                for k, v in truth.factors.items()
            },
            "loading_mode": truth.loading_mode,
        },
        path,
    )


# -- stage artifacts --------------------------------------------------------


def write_residual_artifacts(
    outdir: str | Path,
    outcome: str,
    series: Mapping[str, ResidualSeries],
    models: Sequence[ResidualModel],
) -> list[Path]:
    outdir = Path(outdir)
    csv_path = outdir / f"residuals_{outcome}.csv"
    rows = []
    for code in series:
        s = series[code]
        for i, year in enumerate(s.years):
            rows.append(
                [code, year, float(s.observed[i]), float(s.predicted[i]), float(s.values[i])]
            )
    write_csv(csv_path, ["region", "year", "observed", "predicted", "residual"], rows)
    model_path = outdir / f"residual_models_{outcome}.json"
    write_json(
        {
            str(m.year): {
                "intercept": m.intercept,
                "coefficients": {k: v for k, v in m.coefficients},
                "dropped": list(m.dropped),
                "r_squared": m.r_squared,
                "n_obs": m.n_obs,
            }
            for m in models
        },
        model_path,
    )
    return [csv_path, model_path]


def write_smooth_artifacts(
    outdir: str | Path, outcome: str, result: SmoothResult
) -> list[Path]:
    outdir = Path(outdir)
    csv_path = outdir / f"smooth_{outcome}.csv"
    rows = []
    for (code, year), s in result.summaries.items():
        rows.append(
            [
                code,
                year,
                s.mean,
                s.median,
                s.lower,
                s.upper,
                s.acceptance_rate,
                s.ess,
                s.step_size,
            ]
        )
    write_csv(
        csv_path,
        [
            "region",
            "year",
            "mean",
            "median",
            "lower",
            "upper",
            "acceptance_rate",
            "ess",
            "step_size",
        ],
        rows,
    )
    scale_path = outdir / f"smooth_scales_{outcome}.json"
    write_json(
        {
            "obs_scales": {str(y): v for y, v in result.obs_scales.items()},
            "total_iterations": result.total_iterations,
        },
        scale_path,
    )
    return [csv_path, scale_path]


def write_filter_artifacts(
    outdir: str | Path,
    outcome: str,
    years: Sequence[int],
    trends: Mapping[str, TrendResult],
    phi: float,
) -> list[Path]:
    outdir = Path(outdir)
    csv_path = outdir / f"filtered_{outcome}.csv"
    rows = []
    for code, result in trends.items():
        for i, year in enumerate(years):
            rows.append([code, year, float(result.trend[i]), float(result.cycle[i])])
    write_csv(csv_path, ["region", "year", "trend", "cycle"], rows)
    write_json({"phi": phi}, outdir / f"filter_phi_{outcome}.json")
    return [csv_path, outdir / f"filter_phi_{outcome}.json"]


def synth_record(sol: SynthSolution, balance: Sequence[Mapping] | None = None) -> dict:
    record = {
        "treated": sol.gaps.region,
        "outcome": sol.gaps.outcome,
        "weights": {k: float(v) for k, v in sol.weights.weights.items()},
        "v": {k: float(v) for k, v in sol.v.diag.items()},
        "inner_objective": sol.weights.objective,
        "outer_objective": sol.v.objective,
        "synthetic_path": {str(y): float(v) for y, v in sol.synthetic_path.items()},
        "gaps": gap_record(sol.gaps),
        "rmse_pre": sol.rmse_pre,
        "rmse_post": sol.rmse_post,
    }
    if balance is not None:
        record["balance"] = [dict(row) for row in balance]
    return record


def write_synth_artifacts(
    outdir: str | Path, outcome: str, solutions: Mapping[str, dict]
) -> list[Path]:
    """One JSON per treated unit plus a combined year-by-year path file."""
    outdir = Path(outdir)
    written = []
    for code, record in solutions.items():
        path = outdir / "synth" / f"{outcome}__{code}.json"
        write_json(record, path)
        written.append(path)
    csv_path = outdir / f"synth_paths_{outcome}.csv"
    rows = []
    for code, record in solutions.items():
        gaps = record["gaps"]
        for year, gap in zip(gaps["years"], gaps["values"]):
            synthetic = record["synthetic_path"][str(year)]
            rows.append([code, year, synthetic + gap, synthetic, gap])
    write_csv(csv_path, ["region", "year", "observed", "synthetic", "gap"], rows)
    written.append(csv_path)
    return written


def inference_record(inf: PlaceboInference) -> dict:
    return {
        "outcome": inf.outcome,
        "level": inf.level,
        "treated_stats": {
            c: {"rmse_pre": d.rmse_pre, "rmse_post": d.rmse_post, "ratio": d.ratio}
            for c, d in inf.treated_stats.items()
        },
        "placebo_stats": {
            c: {"rmse_pre": d.rmse_pre, "rmse_post": d.rmse_post, "ratio": d.ratio}
            for c, d in inf.placebo_stats.items()
        },
        "p_rmse_J1": {c: float(p) for c, p in inf.p_exact.items()},
        "p_weighted": inf.p_weighted,
        "p_periods_J": {str(y): float(p) for y, p in inf.per_period_p.items()},
        "bounds": {
            str(y): [float(lo), float(hi)] for y, (lo, hi) in inf.bounds.items()
        },
        "treated_gaps": {c: gap_record(g) for c, g in inf.treated_gaps.items()},
        "placebo_gaps": {c: gap_record(g) for c, g in inf.placebo_gaps.items()},
        "average_gap": gap_record(inf.average_gap),
        "failed": dict(inf.failed),
        "subset_count": inf.subset_count,
        "placebo_average_count": inf.placebo_average_count,
    }


def write_inference_artifacts(outdir: str | Path, inf: PlaceboInference) -> list[Path]:
    outdir = Path(outdir)
    json_path = outdir / f"inference_{inf.outcome}.json"
    write_json(inference_record(inf), json_path)
    spaghetti = outdir / f"spaghetti_{inf.outcome}.csv"
    header = ["year", "average_treated"]
    columns = [list(inf.average_gap.values)]
    for code, gaps in inf.treated_gaps.items():
        header.append(f"treated:{code}")
        columns.append(list(gaps.values))
    for code, gaps in inf.placebo_gaps.items():
        header.append(f"placebo:{code}")
        columns.append(list(gaps.values))
    rows = [
        [year] + [col[i] for col in columns]
        for i, year in enumerate(inf.average_gap.years)
    ]
    write_csv(spaghetti, header, rows)
    return [json_path, spaghetti]


# -- report tables ----------------------------------------------------------


def write_average_path_csv(
    path: str | Path, avg: AveragePath, bounds: Mapping[int, tuple[float, float]]
) -> None:
    rows = []
    for year, value in zip(avg.years, avg.values):
        lo, hi = bounds.get(year, ("", ""))
        rows.append([year, float(value), lo, hi])
    write_csv(path, ["year", "average_gap", "lower", "upper"], rows)


def render_balance_table(title: str, balance: Sequence[Mapping]) -> str:
    """Fixed-width treated-versus-synthetic predictor balance table."""
    lines = [title, "=" * len(title)]
    lines.append(f"{'predictor':<36}{'treated':>14}{'synthetic':>14}{'donor mean':>14}")
    for row in balance:
        lines.append(
            f"{row['predictor']:<36}"
            f"{row['treated']:>14.4f}{row['synthetic']:>14.4f}{row['donor_mean']:>14.4f}"
        )
    return "\n".join(lines) + "\n"


def render_did_table(results: Mapping[str, DidResult]) -> str:
    """Stacked-gap regression table: one column per outcome."""
    rows = [
        ("coefficient", lambda r: f"{r.coefficient:.3f}"),
        ("se_cluster", lambda r: f"({r.se_cluster:.3f})"),
        ("ci95", lambda r: f"{{{r.ci95[0]:.3f}, {r.ci95[1]:.3f}}}"),
        ("N", lambda r: str(r.n_obs)),
        ("within_r2", lambda r: f"{r.r2:.3f}"),
        ("n_treated", lambda r: str(r.n_treated)),
        ("n_control", lambda r: str(r.n_control)),
    ]
    return _render_column_table(
        "Stacked placebo regression (treated x post coefficient)", results, rows
    )


def render_equality_table(results: Mapping[str, EqualityTestResult]) -> str:
    """Group-equality table: one column per outcome."""
    rows = [
        ("delta_mean", lambda r: f"{r.delta:.3f}"),
        ("t_stat", lambda r: f"{r.t_stat:.3f}"),
        ("t_pvalue", lambda r: f"{r.t_pvalue:.3f}"),
        ("ks_stat", lambda r: f"{r.ks_stat:.3f}"),
        ("ks_pvalue", lambda r: f"{r.ks_pvalue:.3f}"),
        ("n_a", lambda r: str(r.n_group_a)),
        ("n_b", lambda r: str(r.n_group_b)),
    ]
    return _render_column_table(
        "Equality of gap distributions between groups", results, rows
    )


def _render_column_table(title: str, results: Mapping, rows: Sequence) -> str:
    """One labeled row per statistic, one sized-to-fit column per outcome."""
    outcomes = list(results)
    cells = {o: [render(results[o]) for _, render in rows] for o in outcomes}
    width = max(
        [len(o) for o in outcomes] + [len(c) for col in cells.values() for c in col]
    ) + 2
    label_w = max(len(label) for label, _ in rows) + 4
    lines = [title]
    lines.append("-" * (label_w + width * len(outcomes)))
    lines.append("".ljust(label_w) + "".join(o.rjust(width) for o in outcomes))
    for i, (label, _) in enumerate(rows):
        lines.append(
            label.ljust(label_w) + "".join(cells[o][i].rjust(width) for o in outcomes)
        )
    return "\n".join(lines) + "\n"


def write_mechanism_csv(path: str | Path, screen: MechanismScreen) -> None:
    rows = [
        [e.mechanism, e.slope, e.correlation, e.t_stat, e.n] for e in screen.effects
    ]
    write_csv(path, ["mechanism", "slope", "correlation", "t_stat", "n"], rows)
