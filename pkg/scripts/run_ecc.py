#!/usr/bin/env python3
"""All protocols on the credit-card CSV, then a side-by-side comparison.

    python3 scripts/run_ecc.py data/creditcard.csv --out ecc-runs

Writes one output directory per run (unbal batch, raced batch, accumulative,
PWIDB) and prints the window-by-window AUC/F1 grid of the two windowed runs.
"""

import argparse
import sys
from pathlib import Path

from pwidb import cli

RUNS = {
    "batch_unbal": {"protocol": "batch", "race": False},
    "batch_race": {"protocol": "batch"},
    "accumulative": {"protocol": "accumulative", "race": False},
    "pwidb": {"protocol": "pwidb"},
}


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("csv")
    ap.add_argument("--out", default="ecc-runs")
    ap.add_argument("--config", help="YAML with shared settings (seed, folds, ...)")
    ap.add_argument("--only", nargs="+", choices=list(RUNS))
    a = ap.parse_args()

    out = Path(a.out)
    for name in a.only or RUNS:
        cfg = cli.load_config(a.config, {"csv": a.csv, "plan": "paper_ecc", **RUNS[name]})
        cfg.validate()
        print(f"== {name}", flush=True)
        result = cli.execute(cfg)
        cli.write_outputs(cfg, result, out / name)
        print(f"   average AUC {result.average('AUC'):.4f}  F1 {result.average('F1'):.4f}", flush=True)

    windowed = [out / n / "report.csv" for n in ("accumulative", "pwidb") if (out / n / "report.csv").exists()]
    if len(windowed) == 2:
        for line in cli.compare_reports(windowed):
            print(",".join(line))
    return 0


if __name__ == "__main__":
    sys.exit(main())
