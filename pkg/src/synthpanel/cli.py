"""Command-line pipeline driver.

Subcommands: ``ingest``, ``simgen``, ``residualize``, ``smooth``,
``filter``, ``synth``, ``placebo``, ``report``, ``run``.  A run
directory accumulates stage artifacts plus a manifest recording the
configuration, input digest, library versions, wall-clock per stage,
and every file each stage read or wrote.  Identical configuration and
input produce byte-identical numeric outputs on re-run.

Environment variables: ``SYNTHPANEL_OUTPUT_DIR`` overrides the output
directory; ``SYNTHPANEL_THREADS`` is recorded in the manifest as a
thread-count hint (stages are sequential).
"""

from __future__ import annotations

import argparse
import os
import sys
import time
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np
import scipy

from . import io as artifacts
from .errors import ConfigError, MissingArtifact, SynthPanelError
from .hpfilter import annual_phi, hp_filter
from .inference import (
    average_gap_series,
    group_equality,
    mechanism_screen,
    placebo_did,
    placebo_run,
)
from .mcmc import SamplerConfig, smooth_panel
from .panel import ColumnSchema, PanelDataset, ingest_panel, validate_treatment
from .residualize import ResidualSeries, fit_cross_section, residualize
from .simulate import DgpConfig, constant_effect, generate
from .synth import PredictorSpec, default_lag_years, fit_synth

__version__ = "0.1.0"

STAGE_NAMES = ("residualize", "smooth", "filter", "synth", "placebo", "report")

CONFIG_DEFAULTS: dict = {
    "input": None,
    "output_dir": "run_out",
    "outcomes": None,
    "t0": None,
    "predictors": {"covariates": None, "lag_years": None},
    "sampler": {
        "iterations": 12500,
        "burn_in": 2500,
        "target_acceptance": 0.25,
        "acceptance_band": [0.2, 0.4],
        "proposal_df": 5.0,
        "adaptation_window": 100,
        "initial_step": None,
        "obs_scale_factor": 0.5,
    },
    "phi": "annual",
    "placebo": {
        "v_budget": 2000,
        "subset_averages": 0,
        "level": 0.05,
        "exclusion_rule": False,
        "criterion": "validation",
    },
    "rmse_warning": 0.1,
    "seed": 0,
    "stages": {name: True for name in STAGE_NAMES},
    "simgen": None,
}


@dataclass(frozen=True)
class RunConfig:
    """Fully resolved pipeline configuration with documented defaults."""

    input: str | None
    output_dir: str
    outcomes: tuple[str, ...] | None
    t0: int | None
    predictors: PredictorSpec
    sampler: Mapping
    phi: float
    placebo: Mapping
    rmse_warning: float
    seed: int
    stages: Mapping[str, bool]
    simgen: Mapping | None
    raw: Mapping = field(default_factory=dict)

    @classmethod
    def from_dict(cls, data: Mapping) -> "RunConfig":
        unknown = set(data) - set(CONFIG_DEFAULTS)
        if unknown:
            raise ConfigError(f"unknown config fields: {sorted(unknown)}")
        merged = {**CONFIG_DEFAULTS, **dict(data)}
        for key in ("predictors", "sampler", "placebo", "stages"):
            section = {**CONFIG_DEFAULTS[key], **(merged[key] or {})}
            extra = set(section) - set(CONFIG_DEFAULTS[key])
            if extra:
                raise ConfigError(f"unknown {key} config fields: {sorted(extra)}")
            merged[key] = section
        phi = merged["phi"]
        if isinstance(phi, str):
            if phi != "annual":
                raise ConfigError(f'phi must be a number or "annual", got {phi!r}')
            phi_value = annual_phi()
        else:
            phi_value = float(phi)
        pred = merged["predictors"]
        spec = PredictorSpec(
            covariates=None if pred["covariates"] is None else tuple(pred["covariates"]),
            lag_years=None if pred["lag_years"] is None else tuple(pred["lag_years"]),
        )
        outcomes = merged["outcomes"]
        output_dir = os.environ.get("SYNTHPANEL_OUTPUT_DIR", merged["output_dir"])
        return cls(
            input=merged["input"],
            output_dir=str(output_dir),
            outcomes=None if outcomes is None else tuple(outcomes),
            t0=None if merged["t0"] is None else int(merged["t0"]),
            predictors=spec,
            sampler=merged["sampler"],
            phi=phi_value,
            placebo=merged["placebo"],
            rmse_warning=float(merged["rmse_warning"]),
            seed=int(merged["seed"]),
            stages=merged["stages"],
            simgen=merged["simgen"],
            raw=merged,
        )

    @classmethod
    def from_file(cls, path: str | Path) -> "RunConfig":
        return cls.from_dict(artifacts.read_json(path))

    def sampler_config(self) -> SamplerConfig:
        s = self.sampler
        return SamplerConfig(
            iterations=int(s["iterations"]),
            burn_in=int(s["burn_in"]),
            target_acceptance=float(s["target_acceptance"]),
            acceptance_band=tuple(float(x) for x in s["acceptance_band"]),
            proposal_df=float(s["proposal_df"]),
            adaptation_window=int(s["adaptation_window"]),
            initial_step=None if s["initial_step"] is None else float(s["initial_step"]),
            obs_scale_factor=float(s["obs_scale_factor"]),
            seed=self.seed,
        )


class Manifest:
    """Accumulating record of what a run read, wrote, and spent."""

    def __init__(self, outdir: Path, config: Mapping) -> None:
        self.outdir = outdir
        self.data: dict = {
            "config": dict(config),
            "versions": {
                "package": __version__,
                "python": sys.version.split()[0],
                "numpy": np.__version__,
                "scipy": scipy.__version__,
            },
            "threads_hint": os.environ.get("SYNTHPANEL_THREADS"),
            "input": None,
            "input_sha256": None,
            "outcomes": None,
            "stages": {},
        }

    @classmethod
    def load(cls, run_dir: str | Path) -> "Manifest":
        run_dir = Path(run_dir)
        path = run_dir / "manifest.json"
        if not path.exists():
            raise MissingArtifact(
                f"no manifest at {path}; run 'ingest' or 'run' first"
            )
        manifest = cls(run_dir, {})
        manifest.data = artifacts.read_json(path)
        return manifest

    def record(
        self,
        stage: str,
        seconds: float,
        reads: Sequence[str | Path],
        writes: Sequence[str | Path],
    ) -> None:
        self.data["stages"][stage] = {
            "seconds": seconds,
            "reads": [str(p) for p in reads],
            "writes": [str(p) for p in writes],
        }

    def save(self) -> None:
        artifacts.write_json(self.data, self.outdir / "manifest.json")

    def config(self) -> RunConfig:
        return RunConfig.from_dict(self.data["config"])


def _schema_for(outcomes: Sequence[str] | None) -> ColumnSchema | None:
    if outcomes is None:
        return None
    return ColumnSchema(outcomes=tuple(outcomes))


def _load_current(run_dir: Path, cfg: RunConfig) -> PanelDataset:
    path = run_dir / "current.csv"
    if not path.exists():
        raise MissingArtifact(f"no working panel at {path}; run 'ingest' first")
    if cfg.t0 is None:
        raise ConfigError("config is missing t0")
    outcomes = Manifest.load(run_dir).data.get("outcomes")
    return ingest_panel(str(path), cfg.t0, schema=_schema_for(outcomes))


# -- stages -----------------------------------------------------------------


def stage_ingest(cfg: RunConfig, manifest: Manifest, outdir: Path) -> PanelDataset:
    start = time.perf_counter()
    written: list[Path] = []
    if cfg.simgen is not None:
        dcfg_fields = dict(cfg.simgen)
        effect = dcfg_fields.pop("constant_effect", None)
        dcfg_fields.setdefault("seed", cfg.seed)
        dcfg = DgpConfig(**{**dcfg_fields, "years": tuple(dcfg_fields.get("years", (1996, 2019)))})
        if effect is not None:
            dcfg = replace(
                dcfg,
                planted_effect=constant_effect(float(effect), dcfg.t0, dcfg.years[1]),
            )
        ds, truth = generate(dcfg)
        panel_path = outdir / "panel.csv"
        artifacts.write_panel_csv(ds, panel_path)
        artifacts.write_truth(truth, outdir / "truth.json")
        written += [panel_path, outdir / "truth.json"]
        input_path = panel_path
        cfg_t0 = dcfg.t0
    else:
        if cfg.input is None:
            raise ConfigError("config needs either an input path or a simgen section")
        if cfg.t0 is None:
            raise ConfigError("config is missing t0")
        input_path = Path(cfg.input)
        ds = ingest_panel(str(input_path), cfg.t0, schema=_schema_for(cfg.outcomes))
        panel_path = outdir / "panel.csv"
        artifacts.write_panel_csv(ds, panel_path)
        written.append(panel_path)
        cfg_t0 = cfg.t0
    validate_treatment(ds)
    current = outdir / "current.csv"
    artifacts.write_panel_csv(ds, current)
    written.append(current)
    manifest.data["input"] = str(input_path)
    manifest.data["input_sha256"] = artifacts.sha256_file(input_path)
    manifest.data["outcomes"] = list(ds.outcomes)
    manifest.data["config"]["t0"] = cfg_t0
    manifest.record(
        "ingest",
        time.perf_counter() - start,
        reads=[input_path] if cfg.simgen is None else [],
        writes=written,
    )
    return ds


def stage_residualize(
    ds: PanelDataset, cfg: RunConfig, manifest: Manifest, outdir: Path
) -> PanelDataset:
    start = time.perf_counter()
    written: list[Path] = []
    new_values = np.array(ds.values)
    for o, outcome in enumerate(ds.outcomes):
        series = residualize(ds, outcome)
        models = [fit_cross_section(ds, outcome, year) for year in ds.years]
        written += artifacts.write_residual_artifacts(outdir, outcome, series, models)
        for code, s in series.items():
            new_values[ds.region_index(code), o, :] = s.values
    out = ds.with_values(new_values)
    current = outdir / "current.csv"
    artifacts.write_panel_csv(out, current)
    written.append(current)
    manifest.record(
        "residualize", time.perf_counter() - start, reads=[], writes=written
    )
    return out


def _as_residual_series(ds: PanelDataset, outcome: str) -> dict[str, ResidualSeries]:
    """Wrap current panel values so the smoother can consume any stage."""
    o = ds.outcome_index(outcome)
    out = {}
    for r, region in enumerate(ds.regions):
        values = np.array(ds.values[r, o, :])
        out[region.code] = ResidualSeries(
            region=region.code,
            outcome=outcome,
            years=ds.years,
            values=values,
            predicted=np.zeros_like(values),
            observed=values.copy(),
        )
    return out


def stage_smooth(
    ds: PanelDataset, cfg: RunConfig, manifest: Manifest, outdir: Path
) -> PanelDataset:
    start = time.perf_counter()
    written: list[Path] = []
    sampler_cfg = cfg.sampler_config()
    new_values = np.array(ds.values)
    for o, outcome in enumerate(ds.outcomes):
        result = smooth_panel(_as_residual_series(ds, outcome), sampler_cfg)
        written += artifacts.write_smooth_artifacts(outdir, outcome, result)
        for (code, year), summary in result.summaries.items():
            new_values[ds.region_index(code), o, ds.year_index(year)] = summary.mean
    out = ds.with_values(new_values)
    current = outdir / "current.csv"
    artifacts.write_panel_csv(out, current)
    written.append(current)
    manifest.record("smooth", time.perf_counter() - start, reads=[], writes=written)
    return out


def stage_filter(
    ds: PanelDataset, cfg: RunConfig, manifest: Manifest, outdir: Path
) -> PanelDataset:
    start = time.perf_counter()
    written: list[Path] = []
    new_values = np.array(ds.values)
    for o, outcome in enumerate(ds.outcomes):
        trends = {}
        for r, region in enumerate(ds.regions):
            result = hp_filter(ds.values[r, o, :], cfg.phi)
            trends[region.code] = result
            new_values[r, o, :] = result.trend
        written += artifacts.write_filter_artifacts(
            outdir, outcome, ds.years, trends, cfg.phi
        )
    out = ds.with_values(new_values)
    current = outdir / "current.csv"
    artifacts.write_panel_csv(out, current)
    written.append(current)
    manifest.record("filter", time.perf_counter() - start, reads=[], writes=written)
    return out


def _balance_rows(ds: PanelDataset, code: str, outcome: str, cfg: RunConfig) -> list[dict]:
    """Raw-unit predictor balance: treated vs. synthetic vs. donor mean."""
    spec = cfg.predictors
    lag_years = (
        spec.lag_years if spec.lag_years is not None else default_lag_years(ds.pre_years)
    )
    covariates = spec.covariates
    if covariates is None:
        from .panel import GEO_NUMERIC_FIELDS

        covariates = GEO_NUMERIC_FIELDS
    return [
        {"kind": "lag", "predictor": f"Outcome variable in {year}", "year": int(year)}
        for year in lag_years
    ] + [{"kind": "covariate", "predictor": name} for name in covariates]


def _fill_balance(
    rows: list[dict],
    ds: PanelDataset,
    code: str,
    outcome: str,
    weights: Mapping[str, float],
) -> list[dict]:
    donors = list(weights)
    w = np.array([weights[d] for d in donors])
    for row in rows:
        if row["kind"] == "lag":
            treated_value = ds.value(code, outcome, row["year"])
            donor_values = np.array(
                [ds.value(d, outcome, row["year"]) for d in donors]
            )
        else:
            treated_value = ds.covariates[code].get(row["predictor"])
            donor_values = np.array(
                [ds.covariates[d].get(row["predictor"]) for d in donors]
            )
        row["treated"] = float(treated_value)
        row["synthetic"] = float(w @ donor_values)
        row["donor_mean"] = float(donor_values.mean())
        row.pop("kind")
        row.pop("year", None)
    return rows


def stage_synth_and_placebo(
    ds: PanelDataset, cfg: RunConfig, manifest: Manifest, outdir: Path
) -> None:
    run_synth = cfg.stages.get("synth", True)
    run_placebo = cfg.stages.get("placebo", True)
    if not (run_synth or run_placebo):
        return
    pcfg = cfg.placebo
    synth_written: list[Path] = []
    placebo_written: list[Path] = []
    synth_seconds = 0.0
    placebo_seconds = 0.0
    for outcome in ds.outcomes:
        start = time.perf_counter()
        if run_placebo:
            inference = placebo_run(
                ds,
                outcome,
                spec=cfg.predictors,
                budget=int(pcfg["v_budget"]),
                subset_averages=int(pcfg["subset_averages"]),
                seed=cfg.seed,
                criterion=str(pcfg["criterion"]),
                exclusion_rule=bool(pcfg["exclusion_rule"]),
                level=float(pcfg["level"]),
            )
            placebo_written += artifacts.write_inference_artifacts(outdir, inference)
            treated_solutions = inference.treated_solutions
            placebo_seconds += time.perf_counter() - start
        else:
            treated_solutions = {
                code: fit_synth(
                    ds,
                    code,
                    outcome,
                    spec=cfg.predictors,
                    seed=cfg.seed,
                    budget=int(pcfg["v_budget"]),
                    criterion=str(pcfg["criterion"]),
                    rmse_warning=cfg.rmse_warning,
                )
                for code in ds.treated_codes
            }
        if run_synth:
            start_synth = time.perf_counter()
            records = {}
            for code, sol in treated_solutions.items():
                rows = _balance_rows(ds, code, outcome, cfg)
                balance = _fill_balance(rows, ds, code, outcome, sol.weights.weights)
                records[code] = artifacts.synth_record(sol, balance)
            synth_written += artifacts.write_synth_artifacts(outdir, outcome, records)
            synth_seconds += time.perf_counter() - start_synth
    if run_synth:
        manifest.record("synth", synth_seconds, reads=[], writes=synth_written)
    if run_placebo:
        manifest.record("placebo", placebo_seconds, reads=[], writes=placebo_written)


def stage_report(run_dir: str | Path) -> list[Path]:
    """Render plot-ready files and layout tables from run artifacts."""
    run_dir = Path(run_dir)
    manifest = Manifest.load(run_dir)
    cfg = manifest.config()
    outcomes = manifest.data.get("outcomes")
    if not outcomes:
        raise MissingArtifact("manifest records no outcomes; ingest did not run")
    report_dir = run_dir / "report"
    start = time.perf_counter()
    written: list[Path] = []
    reads: list[Path] = []
    notes: list[str] = []

    synth_by_outcome: dict[str, dict[str, dict]] = {}
    for outcome in outcomes:
        records = {}
        synth_dir = run_dir / "synth"
        if synth_dir.exists():
            for path in sorted(synth_dir.glob(f"{outcome}__*.json")):
                record = artifacts.read_json(path)
                records[record["treated"]] = record
                reads.append(path)
        if records:
            synth_by_outcome[outcome] = records
    if not synth_by_outcome:
        raise MissingArtifact(
            f"no synthetic-control artifacts under {run_dir / 'synth'}; "
            "run the synth stage first"
        )

    inference_by_outcome: dict[str, dict] = {}
    for outcome in outcomes:
        path = run_dir / f"inference_{outcome}.json"
        if path.exists():
            inference_by_outcome[outcome] = artifacts.read_json(path)
            reads.append(path)
    if not inference_by_outcome:
        notes.append(
            "placebo stage skipped: no inference artifacts; p-value paths, "
            "confidence bounds, and stacked regression tables not produced"
        )

    for outcome, records in synth_by_outcome.items():
        gaps = [artifacts.gap_from_record(r["gaps"]) for r in records.values()]
        average = average_gap_series(gaps)
        inference = inference_by_outcome.get(outcome)
        bounds = {}
        if inference:
            bounds = {
                int(y): (lo, hi) for y, (lo, hi) in inference["bounds"].items()
            }
        from .synth import AveragePath

        post = [i for i, y in enumerate(average.years) if y > average.t0]
        avg = AveragePath(
            outcome=outcome,
            years=average.years,
            values=average.values,
            t0=average.t0,
            atet=float(average.values[post].mean()),
            n_units=len(gaps),
        )
        path = report_dir / f"average_path_{outcome}.csv"
        artifacts.write_average_path_csv(path, avg, bounds)
        written.append(path)
        atet_path = report_dir / f"atet_{outcome}.json"
        artifacts.write_json({"atet": avg.atet, "n_units": avg.n_units}, atet_path)
        written.append(atet_path)

        counts: dict[str, int] = {}
        weight_rows = []
        for code, record in records.items():
            for donor, weight in sorted(record["weights"].items()):
                weight_rows.append([code, donor, weight])
                if weight > 0.01:
                    counts[donor] = counts.get(donor, 0) + 1
        freq_path = report_dir / f"donor_frequency_{outcome}.csv"
        artifacts.write_csv(
            freq_path,
            ["donor", "count"],
            [[donor, counts[donor]] for donor in sorted(counts)],
        )
        weights_path = report_dir / f"weights_{outcome}.csv"
        artifacts.write_csv(weights_path, ["treated", "donor", "weight"], weight_rows)
        written += [freq_path, weights_path]

        for code, record in records.items():
            if "balance" in record:
                table_path = report_dir / f"table1_{outcome}__{code}.txt"
                table_path.parent.mkdir(parents=True, exist_ok=True)
                table_path.write_text(
                    artifacts.render_balance_table(
                        f"Predictor balance: {code} ({outcome})", record["balance"]
                    )
                    + f"\nrmse_pre: {record['rmse_pre']!r}\n"
                )
                written.append(table_path)

        if len(records) == 1:
            (code, record), = records.items()
            single = report_dir / f"single_unit_{outcome}.csv"
            gap_rec = record["gaps"]
            rows = []
            for year, gap in zip(gap_rec["years"], gap_rec["values"]):
                synthetic = record["synthetic_path"][str(year)]
                rows.append([year, synthetic + gap, synthetic, gap])
            artifacts.write_csv(
                single, ["year", "observed", "synthetic", "gap"], rows
            )
            written.append(single)

        if inference:
            p_path = report_dir / f"p_path_{outcome}.csv"
            artifacts.write_csv(
                p_path,
                ["year", "p_periods_J"],
                [[int(y), p] for y, p in sorted(
                    ((int(y), p) for y, p in inference["p_periods_J"].items())
                )],
            )
            written.append(p_path)

    did_results = {}
    equality_results = {}
    mech_gaps: dict[str, dict[str, float]] = {}
    for outcome, inference in inference_by_outcome.items():
        treated_gaps = {
            c: artifacts.gap_from_record(r)
            for c, r in inference["treated_gaps"].items()
        }
        placebo_gaps = {
            c: artifacts.gap_from_record(r)
            for c, r in inference["placebo_gaps"].items()
        }
        all_gaps = list(treated_gaps.values()) + list(placebo_gaps.values())
        try:
            did_results[outcome] = placebo_did(all_gaps, treated_gaps.keys())
        except SynthPanelError as exc:
            notes.append(f"stacked regression skipped for {outcome}: {exc}")
        a = [float(g.post_values.mean()) for g in treated_gaps.values()]
        b = [float(g.post_values.mean()) for g in placebo_gaps.values()]
        try:
            equality_results[outcome] = group_equality(a, b)
        except SynthPanelError as exc:
            notes.append(f"equality test skipped for {outcome}: {exc}")
        mech_gaps[outcome] = {
            g.region: float(g.post_values.mean())
            for g in list(treated_gaps.values()) + list(placebo_gaps.values())
        }
    if did_results:
        table2 = report_dir / "table2.txt"
        table2.parent.mkdir(parents=True, exist_ok=True)
        table2.write_text(artifacts.render_did_table(did_results))
        written.append(table2)
        table2_csv = report_dir / "table2.csv"
        artifacts.write_csv(
            table2_csv,
            ["outcome", "coefficient", "se_cluster", "ci_low", "ci_high", "n_obs", "r2"],
            [
                [o, r.coefficient, r.se_cluster, r.ci95[0], r.ci95[1], r.n_obs, r.r2]
                for o, r in did_results.items()
            ],
        )
        written.append(table2_csv)
    if equality_results:
        table3 = report_dir / "table3.txt"
        table3.parent.mkdir(parents=True, exist_ok=True)
        table3.write_text(artifacts.render_equality_table(equality_results))
        written.append(table3)

    if inference_by_outcome:
        panel_path = run_dir / "panel.csv"
        if panel_path.exists() and len(mech_gaps) >= 1:
            ds = ingest_panel(
                str(panel_path), cfg.t0, schema=_schema_for(manifest.data.get("outcomes"))
            )
            reads.append(panel_path)
            regions = set.intersection(*(set(v) for v in mech_gaps.values()))
            mechanisms = {
                name: {
                    code: ds.covariates[code].get(name)
                    for code in regions
                    if code in ds.covariates
                }
                for name in ds.covariates[ds.regions[0].code].numeric_names()
            }
            try:
                screen = mechanism_screen(mech_gaps, mechanisms)
                mech_path = report_dir / "mechanisms.csv"
                artifacts.write_mechanism_csv(mech_path, screen)
                written.append(mech_path)
                loadings_path = report_dir / "mechanism_loadings.json"
                artifacts.write_json(
                    {
                        "loadings": dict(screen.loadings),
                        "explained": screen.explained,
                        "scores": dict(screen.scores),
                    },
                    loadings_path,
                )
                written.append(loadings_path)
            except SynthPanelError as exc:
                notes.append(f"mechanism screen skipped: {exc}")
        else:
            notes.append("mechanism screen skipped: panel.csv not found")

    summary = report_dir / "report_summary.txt"
    summary.parent.mkdir(parents=True, exist_ok=True)
    lines = ["Report contents:"]
    lines += [f"  {p.relative_to(run_dir)}" for p in written]
    if notes:
        lines.append("Notes:")
        lines += [f"  {n}" for n in notes]
    summary.write_text("\n".join(lines) + "\n")
    written.append(summary)
    manifest.record("report", time.perf_counter() - start, reads=reads, writes=written)
    manifest.save()
    return written


# -- commands ---------------------------------------------------------------


def cmd_run(config_path: str, output_dir: str | None = None) -> int:
    """Execute every enabled stage in pipeline order."""
    cfg = RunConfig.from_file(config_path)
    if output_dir is not None:
        cfg = replace(cfg, output_dir=output_dir)
    outdir = Path(cfg.output_dir)
    outdir.mkdir(parents=True, exist_ok=True)
    manifest = Manifest(outdir, cfg.raw)
    ds = stage_ingest(cfg, manifest, outdir)
    if cfg.stages.get("residualize", True):
        ds = stage_residualize(ds, cfg, manifest, outdir)
    if cfg.stages.get("smooth", True):
        ds = stage_smooth(ds, cfg, manifest, outdir)
    if cfg.stages.get("filter", True):
        ds = stage_filter(ds, cfg, manifest, outdir)
    stage_synth_and_placebo(ds, cfg, manifest, outdir)
    manifest.save()
    if cfg.stages.get("report", True):
        stage_report(outdir)
    return 0


def cmd_report(run_dir: str) -> int:
    stage_report(run_dir)
    return 0


def _single_stage(run_dir: str, stage: str) -> int:
    outdir = Path(run_dir)
    manifest = Manifest.load(outdir)
    cfg = manifest.config()
    ds = _load_current(outdir, cfg)
    if stage == "residualize":
        stage_residualize(ds, cfg, manifest, outdir)
    elif stage == "smooth":
        stage_smooth(ds, cfg, manifest, outdir)
    elif stage == "filter":
        stage_filter(ds, cfg, manifest, outdir)
    elif stage in ("synth", "placebo"):
        only = {name: False for name in STAGE_NAMES}
        only[stage] = True
        stage_cfg = replace(cfg, stages=only)
        stage_synth_and_placebo(ds, stage_cfg, manifest, outdir)
    manifest.save()
    return 0


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="synthpanel",
        description=(
            "Panel pipeline: residualize aggregate indicators, smooth them, "
            "extract trends, fit counterfactual paths, and run placebo "
            "permutation inference."
        ),
    )
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", help="validate an input panel into a run directory")
    p.add_argument("--input", required=True, help="long-form panel CSV")
    p.add_argument("--t0", type=int, required=True, help="treatment year")
    p.add_argument("--output-dir", required=True)
    p.add_argument("--outcomes", help="comma-separated outcome columns")

    p = sub.add_parser("simgen", help="generate a synthetic panel with ground truth")
    p.add_argument("--output-dir", required=True)
    p.add_argument("--config", help="JSON file of generator settings")
    p.add_argument("--n-treated", type=int)
    p.add_argument("--n-donors", type=int)
    p.add_argument("--years", help="first:last, e.g. 1996:2019")
    p.add_argument("--t0", type=int)
    p.add_argument("--n-factors", type=int)
    p.add_argument("--factor-scale", type=float)
    p.add_argument("--loading-scale", type=float)
    p.add_argument("--noise-sd", type=float)
    p.add_argument("--constant-effect", type=float, help="flat planted post-T0 gap")
    p.add_argument("--covariate-link", type=float)
    p.add_argument("--loading-mode", choices=("hull", "exchangeable"))
    p.add_argument("--seed", type=int)

    for name, help_text in (
        ("residualize", "regress outcomes on geography; keep residuals"),
        ("smooth", "posterior-smooth the working panel"),
        ("filter", "replace values with their smooth trends"),
        ("synth", "fit counterfactual paths for treated units"),
        ("placebo", "run placebo permutation inference"),
    ):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--run-dir", required=True)

    p = sub.add_parser("report", help="render tables and plot-ready files")
    p.add_argument("--run-dir", required=True)

    p = sub.add_parser("run", help="execute the full pipeline from a config file")
    p.add_argument("--config", required=True, help="JSON run configuration")
    p.add_argument("--output-dir", help="override the config's output directory")
    return parser


def _cmd_ingest(args: argparse.Namespace) -> int:
    outcomes = None
    if args.outcomes:
        outcomes = tuple(s.strip() for s in args.outcomes.split(",") if s.strip())
    cfg = RunConfig.from_dict(
        {
            "input": args.input,
            "t0": args.t0,
            "output_dir": args.output_dir,
            "outcomes": outcomes,
        }
    )
    outdir = Path(cfg.output_dir)
    outdir.mkdir(parents=True, exist_ok=True)
    manifest = Manifest(outdir, cfg.raw)
    stage_ingest(cfg, manifest, outdir)
    manifest.save()
    return 0


def _cmd_simgen(args: argparse.Namespace) -> int:
    settings: dict = {}
    if args.config:
        settings.update(artifacts.read_json(args.config))
    flag_map = {
        "n_treated": args.n_treated,
        "n_donors": args.n_donors,
        "t0": args.t0,
        "n_factors": args.n_factors,
        "factor_scale": args.factor_scale,
        "loading_scale": args.loading_scale,
        "noise_sd": args.noise_sd,
        "covariate_link": args.covariate_link,
        "loading_mode": args.loading_mode,
        "seed": args.seed,
    }
    settings.update({k: v for k, v in flag_map.items() if v is not None})
    if args.years:
        first, _, last = args.years.partition(":")
        settings["years"] = (int(first), int(last))
    elif "years" in settings:
        settings["years"] = tuple(settings["years"])
    effect = settings.pop("constant_effect", None)
    if args.constant_effect is not None:
        effect = args.constant_effect
    if "planted_effect" in settings:
        settings["planted_effect"] = {
            int(y): float(v) for y, v in settings["planted_effect"].items()
        }
    dcfg = DgpConfig(**settings)
    if effect is not None:
        dcfg = replace(
            dcfg, planted_effect=constant_effect(float(effect), dcfg.t0, dcfg.years[1])
        )
    ds, truth = generate(dcfg)
    outdir = Path(os.environ.get("SYNTHPANEL_OUTPUT_DIR", args.output_dir))
    outdir.mkdir(parents=True, exist_ok=True)
    artifacts.write_panel_csv(ds, outdir / "panel.csv")
    artifacts.write_truth(truth, outdir / "truth.json")
    print(f"wrote {outdir / 'panel.csv'} and {outdir / 'truth.json'}")
    return 0


def main(argv: Sequence[str] | None = None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        if args.command == "run":
            return cmd_run(args.config, args.output_dir)
        if args.command == "report":
            return cmd_report(args.run_dir)
        if args.command == "ingest":
            return _cmd_ingest(args)
        if args.command == "simgen":
            return _cmd_simgen(args)
        return _single_stage(args.run_dir, args.command)
    except SynthPanelError as exc:
        print(f"error [{args.command}]: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"error [{args.command}]: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
