"""Run the bundled demonstration pipeline and digest its outputs.

The bundled config generates a 66-region panel with a known flat
treatment effect planted in the post-period, pushes it through every
stage (residualize -> smooth -> filter -> synth -> placebo -> report),
and leaves plot-ready CSVs plus text tables in the output directory.
This script runs it and prints the headline numbers so you can compare
the recovered estimates against the planted truth.

Usage:
    python3 demos/walkthrough.py [--output-dir DIR]
"""

from __future__ import annotations

import argparse
import json
from pathlib import Path

from synthpanel.cli import main as cli_main

HERE = Path(__file__).resolve().parent
CONFIG = HERE / "demo_config.json"


def run(output_dir: str) -> Path:
    rc = cli_main(["run", "--config", str(CONFIG), "--output-dir", output_dir])
    if rc != 0:
        raise SystemExit(rc)
    return Path(output_dir)


def digest(outdir: Path) -> None:
    cfg = json.loads(CONFIG.read_text())
    planted = cfg["simgen"]["constant_effect"]
    outcomes = cfg["simgen"]["outcomes"]

    print()
    print(f"planted post-period effect: {planted:+.2f} on every treated unit")
    print(f"regions: {cfg['simgen']['n_treated']} treated + "
          f"{cfg['simgen']['n_donors']} donors, "
          f"treatment starts after {cfg['simgen']['t0']}")
    print()

    print("recovered average treatment effects (observed minus synthetic):")
    for outcome in outcomes:
        blob = json.loads((outdir / "report" / f"atet_{outcome}.json").read_text())
        print(f"  {outcome:28s} atet {blob['atet']:+.3f}  over {blob['n_units']} units")
    print()
    print("the estimates sit between the planted effect and zero: the")
    print("cross-sectional regression, the smoother, and the trend filter")
    print("each absorb a share of a signal this small at 66 regions.")
    print()

    print("per-year placebo p-values (average treated gap vs donor gaps):")
    for outcome in outcomes:
        path = outdir / "report" / f"p_path_{outcome}.csv"
        rows = [line.split(",") for line in path.read_text().splitlines()[1:]]
        cells = " ".join(f"{year}:{float(p):.3f}" for year, p in rows)
        print(f"  {outcome:28s} {cells}")
    print()

    for name in ("table2.txt", "table3.txt"):
        print((outdir / "report" / name).read_text())

    first_balance = sorted((outdir / "report").glob("table1_*.txt"))[0]
    print(first_balance.read_text())
    print(f"full artifact set: {outdir}/report/ (see report_summary.txt)")


if __name__ == "__main__":
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--output-dir", default="demo_out")
    args = parser.parse_args()
    digest(run(args.output_dir))
