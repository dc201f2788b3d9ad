"""Command-line pipeline: config handling, artifacts, determinism."""

from __future__ import annotations

import json
from pathlib import Path

import pytest

from synthpanel import ANNUAL_PHI, ConfigError, read_json, write_json
from synthpanel.cli import CONFIG_DEFAULTS, STAGE_NAMES, Manifest, RunConfig, main

TINY_CONFIG = {
    "output_dir": "PLACEHOLDER",
    "seed": 7,
    "sampler": {"iterations": 300, "burn_in": 100, "adaptation_window": 50},
    "placebo": {"v_budget": 24, "subset_averages": 10},
    "rmse_warning": 1e9,
    "simgen": {
        "n_treated": 2,
        "n_donors": 8,
        "years": [2000, 2012],
        "t0": 2006,
        "noise_sd": 0.02,
        "constant_effect": -0.3,
        "outcomes": ["m0"],
    },
}


def run_pipeline(outdir: Path) -> Path:
    cfg_path = outdir.parent / f"{outdir.name}_config.json"
    cfg = dict(TINY_CONFIG, output_dir=str(outdir))
    write_json(cfg, cfg_path)
    assert main(["run", "--config", str(cfg_path)]) == 0
    return outdir


@pytest.fixture(scope="module")
def run_dir(tmp_path_factory) -> Path:
    return run_pipeline(tmp_path_factory.mktemp("cli") / "out1")


class TestRunConfig:
    def test_empty_config_gets_documented_defaults(self):
        cfg = RunConfig.from_dict({})
        assert cfg.output_dir == "run_out"
        assert cfg.phi == ANNUAL_PHI
        assert cfg.seed == 0
        assert all(cfg.stages[name] for name in STAGE_NAMES)
        assert cfg.placebo["v_budget"] == 2000
        assert cfg.sampler["iterations"] == 12500

    def test_unknown_top_level_field_rejected(self):
        with pytest.raises(ConfigError, match="unknown config fields"):
            RunConfig.from_dict({"outputdir": "x"})

    def test_unknown_section_field_rejected(self):
        with pytest.raises(ConfigError, match="sampler"):
            RunConfig.from_dict({"sampler": {"iters": 10}})
        with pytest.raises(ConfigError, match="placebo"):
            RunConfig.from_dict({"placebo": {"budget": 10}})

    def test_phi_accepts_number_or_annual(self):
        assert RunConfig.from_dict({"phi": "annual"}).phi == ANNUAL_PHI
        assert RunConfig.from_dict({"phi": 1600}).phi == 1600.0
        with pytest.raises(ConfigError, match="phi"):
            RunConfig.from_dict({"phi": "quarterly"})

    def test_sampler_config_carries_seed_and_types(self):
        cfg = RunConfig.from_dict(
            {"seed": 11, "sampler": {"iterations": 500, "burn_in": 100}}
        )
        sc = cfg.sampler_config()
        assert sc.seed == 11
        assert sc.iterations == 500 and sc.burn_in == 100
        assert sc.target_acceptance == 0.25
        assert sc.acceptance_band == (0.2, 0.4)

    def test_env_var_overrides_output_dir(self, monkeypatch):
        monkeypatch.setenv("SYNTHPANEL_OUTPUT_DIR", "/tmp/elsewhere")
        cfg = RunConfig.from_dict({"output_dir": "here"})
        assert cfg.output_dir == "/tmp/elsewhere"

    def test_defaults_dict_is_not_mutated(self):
        RunConfig.from_dict({"sampler": {"iterations": 1000}})
        assert CONFIG_DEFAULTS["sampler"]["iterations"] == 12500


class TestFullRun:
    def test_stage_artifacts_exist(self, run_dir):
        for name in (
            "panel.csv",
            "truth.json",
            "current.csv",
            "manifest.json",
            "residuals_m0.csv",
            "residual_models_m0.json",
            "smooth_m0.csv",
            "smooth_scales_m0.json",
            "filtered_m0.csv",
            "filter_phi_m0.json",
            "synth_paths_m0.csv",
            "inference_m0.json",
            "spaghetti_m0.csv",
        ):
            assert (run_dir / name).exists(), name
        assert (run_dir / "synth" / "m0__T01.json").exists()
        assert (run_dir / "synth" / "m0__T02.json").exists()

    def test_report_files_exist(self, run_dir):
        report = run_dir / "report"
        for name in (
            "average_path_m0.csv",
            "atet_m0.json",
            "donor_frequency_m0.csv",
            "weights_m0.csv",
            "table1_m0__T01.txt",
            "p_path_m0.csv",
            "table2.txt",
            "table2.csv",
            "table3.txt",
            "mechanisms.csv",
            "mechanism_loadings.json",
            "report_summary.txt",
        ):
            assert (report / name).exists(), name

    def test_balance_table_uses_lag_row_labels(self, run_dir):
        text = (run_dir / "report" / "table1_m0__T01.txt").read_text()
        assert "Outcome variable in " in text
        assert "rmse_pre:" in text

    def test_manifest_records_run(self, run_dir):
        manifest = read_json(run_dir / "manifest.json")
        assert manifest["outcomes"] == ["m0"]
        assert manifest["input_sha256"] is not None
        assert set(manifest["versions"]) == {"package", "python", "numpy", "scipy"}
        recorded = set(manifest["stages"])
        assert {"ingest", "residualize", "smooth", "filter", "synth", "placebo"} <= recorded
        for stage in recorded:
            assert manifest["stages"][stage]["seconds"] >= 0.0

    def test_atet_json_is_finite(self, run_dir):
        blob = read_json(run_dir / "report" / "atet_m0.json")
        assert isinstance(blob["atet"], float)
        assert blob["n_units"] == 2

    def test_filter_phi_recorded(self, run_dir):
        assert read_json(run_dir / "filter_phi_m0.json")["phi"] == ANNUAL_PHI

    def test_rerun_is_byte_identical_except_manifest(self, run_dir, tmp_path):
        second = run_pipeline(tmp_path / "out2")
        first_files = {
            p.relative_to(run_dir) for p in run_dir.rglob("*") if p.is_file()
        }
        second_files = {
            p.relative_to(second) for p in second.rglob("*") if p.is_file()
        }
        assert first_files == second_files
        for rel in sorted(first_files):
            if rel.name == "manifest.json":
                continue
            assert (run_dir / rel).read_bytes() == (second / rel).read_bytes(), rel

    def test_report_regenerates_from_artifacts(self, run_dir):
        table2 = run_dir / "report" / "table2.txt"
        before = table2.read_text()
        table2.unlink()
        assert main(["report", "--run-dir", str(run_dir)]) == 0
        assert table2.read_text() == before


class TestStageCommands:
    def test_stagewise_pipeline_matches_subcommand_flow(self, tmp_path):
        gen = tmp_path / "gen"
        cfg = tmp_path / "gen_cfg.json"
        write_json(dict(TINY_CONFIG["simgen"], seed=7), cfg)
        assert main(["simgen", "--output-dir", str(gen), "--config", str(cfg)]) == 0
        assert (gen / "panel.csv").exists() and (gen / "truth.json").exists()

        stage = tmp_path / "staged"
        assert (
            main(
                [
                    "ingest",
                    "--input",
                    str(gen / "panel.csv"),
                    "--t0",
                    "2006",
                    "--output-dir",
                    str(stage),
                    "--outcomes",
                    "m0",
                ]
            )
            == 0
        )
        for command in ("residualize", "smooth", "filter", "synth", "placebo"):
            assert main([command, "--run-dir", str(stage)]) == 0, command
        assert main(["report", "--run-dir", str(stage)]) == 0
        assert (stage / "report" / "table2.txt").exists()

    def test_simgen_flags_override_config(self, tmp_path):
        out = tmp_path / "flagged"
        assert (
            main(
                [
                    "simgen",
                    "--output-dir",
                    str(out),
                    "--n-treated",
                    "1",
                    "--n-donors",
                    "4",
                    "--years",
                    "2000:2006",
                    "--t0",
                    "2003",
                    "--seed",
                    "3",
                ]
            )
            == 0
        )
        header = (out / "panel.csv").read_text().splitlines()
        codes = {line.split(",")[0] for line in header[1:]}
        assert codes == {"T01", "D01", "D02", "D03", "D04"}


class TestErrorHandling:
    def test_bad_config_exits_one_with_typed_message(self, tmp_path, capsys):
        cfg = tmp_path / "bad.json"
        write_json({"bogus_key": 1}, cfg)
        assert main(["run", "--config", str(cfg)]) == 1
        err = capsys.readouterr().err
        assert err.startswith("error [run]: ConfigError:")

    def test_stage_without_manifest_exits_one(self, tmp_path, capsys):
        empty = tmp_path / "nothing"
        empty.mkdir()
        assert main(["residualize", "--run-dir", str(empty)]) == 1
        err = capsys.readouterr().err
        assert "MissingArtifact" in err

    def test_missing_input_file_exits_one(self, tmp_path, capsys):
        assert (
            main(
                [
                    "ingest",
                    "--input",
                    str(tmp_path / "absent.csv"),
                    "--t0",
                    "2005",
                    "--output-dir",
                    str(tmp_path / "o"),
                ]
            )
            == 1
        )
        assert "error [ingest]" in capsys.readouterr().err

    def test_config_without_input_or_simgen_rejected(self, tmp_path, capsys):
        cfg = tmp_path / "empty.json"
        write_json({"t0": 2005}, cfg)
        assert main(["run", "--config", str(cfg)]) == 1
        assert "ConfigError" in capsys.readouterr().err
