#!/usr/bin/env python3
"""Batch vs accumulative vs PWIDB on seeded synthetic streams.

    python3 scripts/desk_scale.py --seeds 0 1 2 3 4 --out desk.csv

Defaults match the desk-scale acceptance check (n=40000, IR 100, overlap 2,
eight equal chunks, 5-fold race with 10-tree forests, 50-tree reported model).
"""

import argparse
import csv
import time

import numpy as np

from pwidb import ingest, streaming
from pwidb.forest import ForestParams
from pwidb.racing import RaceConfig


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--seeds", type=int, nargs="+", default=[0, 1, 2, 3, 4])
    ap.add_argument("--n", type=int, default=40000)
    ap.add_argument("--ir", type=float, default=100)
    ap.add_argument("--overlap", type=float, default=2.0)
    ap.add_argument("--chunks", type=int, default=8)
    ap.add_argument("--folds", type=int, default=5)
    ap.add_argument("--race-ntree", type=int, default=10)
    ap.add_argument("--ntree", type=int, default=50)
    ap.add_argument("--threads", type=int, default=1)
    ap.add_argument("--out", help="per-seed CSV")
    a = ap.parse_args()

    fp = ForestParams(ntree=a.ntree, threads=a.threads)
    rc = RaceConfig(folds=a.folds, forest=ForestParams(ntree=a.race_ntree, threads=a.threads), threads=a.threads)
    rows = []
    for seed in a.seeds:
        t0 = time.perf_counter()
        frame = ingest.gen_synthetic(ingest.SynthConfig(n=a.n, ir=a.ir, overlap=a.overlap, seed=seed))
        chunks = streaming.cut_chunks(frame, streaming.plan_chunks(len(frame), "equal", a.chunks))
        batch = streaming.run_batch(chunks[0], None, fp, seed)
        acc = streaming.run_accumulative(chunks, None, fp, seed)
        pw = streaming.run_pwidb(chunks, rc, fp, seed)
        row = {
            "seed": seed,
            "batch_w1": batch.average("AUC"),
            "accumulative": acc.average("AUC"),
            "pwidb": pw.average("AUC"),
            "pwidb_techniques": " ".join(r.technique for r in pw.rows),
            "seconds": time.perf_counter() - t0,
        }
        rows.append(row)
        print(f"seed {seed}: batch-w1 {row['batch_w1']:.4f}  acc {row['accumulative']:.4f}  "
              f"pwidb {row['pwidb']:.4f}  [{row['pwidb_techniques']}]  {row['seconds']:.0f}s", flush=True)

    means = {k: float(np.mean([r[k] for r in rows])) for k in ("batch_w1", "accumulative", "pwidb")}
    print("mean: " + "  ".join(f"{k} {v:.4f}" for k, v in means.items()))
    if a.out:
        with open(a.out, "w", newline="") as fh:
            w = csv.DictWriter(fh, list(rows[0]), lineterminator="\n")
            w.writeheader()
            w.writerows(rows)


if __name__ == "__main__":
    main()
