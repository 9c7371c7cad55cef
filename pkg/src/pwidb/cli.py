"""Command line: ``pwidb run``, ``pwidb compare`` and ``pwidb gen``.

Run configs are flat YAML mappings. Every key is optional; the defaults are
those of :class:`RunConfig`. Flags given on the command line win over the file.

==================  ===========================================================
key                 meaning
==================  ===========================================================
csv                 path of a labeled CSV (header with a ``Class`` column)
synth_n, synth_ir,  synthetic stream, used when ``csv`` is empty
synth_p,
synth_overlap,
synth_seed
shuffle             seed for shuffling rows before chunking (default: file order)
protocol            batch | accumulative | pwidb
plan                paper_ecc | equal
chunks              number of chunks for ``plan: equal``
train_fraction      train share of every chunk (0.9)
race                false runs without balancing (pwidb needs true)
candidates          list of technique names (default: all nine)
metric              AUC | F1
folds, max_exp,     racing settings
alpha, posthoc
race_ntree          forest size inside the race
ntree, mtry,        forest used for the reported models
min_leaf
carry_policy        always | improve_threshold:TAU
seed                master seed
threads             worker cap; never changes results
output_dir          defaults to $PWIDB_OUTPUT_DIR, else ./pwidb-out
==================  ===========================================================
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import hashlib
import json
import logging
import os
import sys
from dataclasses import dataclass, fields
from pathlib import Path
from typing import Sequence

import numpy as np
import yaml

from . import __version__, forest, ingest, racing, streaming
from .core import concat
from .resampling import TECHNIQUES, BalancerSpec

log = logging.getLogger("pwidb")

OUTPUT_ENV = "PWIDB_OUTPUT_DIR"
EXIT_CONFIG = 2
EXIT_HALTED = 3
EXIT_OUTPUT = 4


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class RunConfig:
    csv: str | None = None
    synth_n: int = 40000
    synth_ir: float = 100.0
    synth_p: int = 10
    synth_overlap: float = 2.0
    synth_seed: int = 0
    shuffle: int | None = None
    protocol: str = "pwidb"
    plan: str = "equal"
    chunks: int = 8
    train_fraction: float = 0.9
    race: bool = True
    candidates: tuple[str, ...] = TECHNIQUES
    metric: str = "AUC"
    folds: int = 10
    max_exp: int | None = None
    alpha: float = 0.05
    posthoc: str = "ttest"
    race_ntree: int = 50
    ntree: int = 100
    mtry: int | None = None
    min_leaf: int = 1
    carry_policy: str = "always"
    seed: int = 0
    threads: int = 1
    output_dir: str | None = None

    @classmethod
    def from_mapping(cls, data: dict) -> "RunConfig":
        known = {f.name: f for f in fields(cls)}
        unknown = sorted(set(data) - set(known))
        if unknown:
            raise ConfigError(f"unknown field(s): {', '.join(unknown)}")
        kw = {}
        for name, value in data.items():
            kw[name] = _coerce(name, known[name].type, value)
        cfg = cls(**kw)
        cfg.validate()
        return cfg

    def validate(self) -> None:
        def bad(field, msg):
            raise ConfigError(f"{field}: {msg}")

        if self.protocol not in ("batch", "accumulative", "pwidb"):
            bad("protocol", "must be batch, accumulative or pwidb")
        if self.protocol == "pwidb" and not self.race:
            bad("race", "pwidb requires racing (race: true)")
        if self.plan not in ("paper_ecc", "equal"):
            bad("plan", "must be paper_ecc or equal")
        if self.chunks < 1:
            bad("chunks", "must be >= 1")
        if not 0 < self.train_fraction < 1:
            bad("train_fraction", "must lie in (0, 1)")
        for t in self.candidates:
            if t not in TECHNIQUES:
                bad("candidates", f"unknown technique {t!r}")
        if len(set(self.candidates)) != len(self.candidates) or not self.candidates:
            bad("candidates", "must be a non-empty list without repeats")
        if self.metric.upper() not in ("AUC", "F1"):
            bad("metric", "must be AUC or F1")
        if self.folds < 2:
            bad("folds", "must be >= 2")
        if self.max_exp is not None and self.max_exp < len(self.candidates):
            bad("max_exp", f"must be >= the number of candidates ({len(self.candidates)})")
        if not 0 < self.alpha < 1:
            bad("alpha", "must lie in (0, 1)")
        if self.posthoc not in racing.POSTHOC_TESTS:
            bad("posthoc", f"must be one of {racing.POSTHOC_TESTS}")
        for name in ("race_ntree", "ntree", "min_leaf", "threads"):
            if getattr(self, name) < 1:
                bad(name, "must be >= 1")
        if self.mtry is not None and self.mtry < 1:
            bad("mtry", "must be >= 1")
        if self.csv is None:
            if self.synth_n < 1:
                bad("synth_n", "must be >= 1")
            if self.synth_ir < 1:
                bad("synth_ir", "must be >= 1")
            if self.synth_p < 3:
                bad("synth_p", "must be >= 3")
            if self.synth_overlap < 0:
                bad("synth_overlap", "must be >= 0")
        try:
            streaming._parse_carry_policy(self.carry_policy)
        except ValueError as exc:
            bad("carry_policy", str(exc))

    def identity(self) -> dict:
        """Fields that determine results (thread count and output location do not)."""
        d = dataclasses.asdict(self)
        d.pop("threads")
        d.pop("output_dir")
        d["candidates"] = list(self.candidates)
        return d

    def digest(self) -> str:
        blob = json.dumps(self.identity(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()

    def forest_params(self) -> forest.ForestParams:
        return forest.ForestParams(ntree=self.ntree, mtry=self.mtry, min_leaf=self.min_leaf, threads=self.threads)

    def race_config(self) -> racing.RaceConfig | None:
        if not self.race:
            return None
        return racing.RaceConfig(
            candidates=tuple(BalancerSpec(t) for t in self.candidates),
            metric=self.metric.upper(),
            folds=self.folds,
            max_exp=self.max_exp,
            alpha=self.alpha,
            forest=forest.ForestParams(ntree=self.race_ntree, mtry=self.mtry, min_leaf=self.min_leaf),
            posthoc=self.posthoc,
            threads=self.threads,
        )


def _coerce(name: str, typ: str, value):
    if value is None:
        if "None" in typ:
            return None
        raise ConfigError(f"{name}: may not be empty")
    try:
        if typ.startswith("tuple"):
            if isinstance(value, str):
                value = [v.strip() for v in value.split(",") if v.strip()]
            return tuple(str(v) for v in value)
        if typ.startswith("bool"):
            if isinstance(value, bool):
                return value
            if str(value).lower() in ("true", "yes", "1"):
                return True
            if str(value).lower() in ("false", "no", "0"):
                return False
            raise ValueError(value)
        if typ.startswith("int"):
            if isinstance(value, bool) or (isinstance(value, float) and not value.is_integer()):
                raise ValueError(value)
            return int(value)
        if typ.startswith("float"):
            return float(value)
        return str(value)
    except (TypeError, ValueError):
        raise ConfigError(f"{name}: expected {typ.split(' ')[0]}, got {value!r}") from None


def load_config(path: str | None, overrides: dict) -> RunConfig:
    data = {}
    if path:
        try:
            text = Path(path).read_text(encoding="utf-8")
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        try:
            data = yaml.safe_load(text) or {}
        except yaml.YAMLError as exc:
            raise ConfigError(f"{path}: not valid YAML: {exc}") from exc
        if not isinstance(data, dict):
            raise ConfigError(f"{path}: expected a key-value mapping")
    data.update({k: v for k, v in overrides.items() if v is not None})
    return RunConfig.from_mapping(data)


def load_dataset(cfg: RunConfig):
    if cfg.csv:
        data = ingest.load_csv(cfg.csv)
    else:
        sc = ingest.SynthConfig(
            n=cfg.synth_n, ir=cfg.synth_ir, p=cfg.synth_p, overlap=cfg.synth_overlap, seed=cfg.synth_seed
        )
        data = ingest.gen_synthetic(sc)
    if cfg.shuffle is not None:
        data = ingest.shuffle_frame(data, cfg.shuffle)
    return data


def execute(cfg: RunConfig, checkpoint_dir=None, resume=None) -> streaming.RunResult:
    data = load_dataset(cfg)
    fp, rc = cfg.forest_params(), cfg.race_config()
    if cfg.protocol == "batch":
        return streaming.run_batch(data, rc, fp, cfg.seed, cfg.train_fraction)
    plan = streaming.plan_chunks(len(data), cfg.plan, cfg.chunks, cfg.train_fraction)
    if plan.truncated:
        log.warning("dataset shorter than the %s plan; last chunk truncated", cfg.plan)
    chunks = streaming.cut_chunks(data, plan)
    if cfg.protocol == "accumulative":
        return streaming.run_accumulative(chunks, rc, fp, cfg.seed, cfg.train_fraction)
    return streaming.run_pwidb(chunks, rc, fp, cfg.seed, cfg.train_fraction, cfg.carry_policy, checkpoint_dir, resume)


def write_outputs(cfg: RunConfig, result: streaming.RunResult, out: Path) -> list[Path]:
    out.mkdir(parents=True, exist_ok=True)
    report = out / "report.csv"
    written = ingest.write_reports(result.rows, result.hypotheses, report)

    for row, outcome in zip(result.rows, result.races):
        if outcome is not None:
            path = out / f"race_window{row.window}.csv"
            outcome.write_trace(path)
            written.append(path)

    summary = out / "summary.csv"
    with open(summary, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["protocol", "windows", "average_AUC", "average_F1"])
        w.writerow([result.protocol, len(result.rows), f"{result.average('AUC'):.4f}", f"{result.average('F1'):.4f}"])
    written.append(summary)

    plot = out / "plot.csv"
    with open(plot, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["x", "series", "value"])
        for r in result.rows:
            for m in ("AUC", "F1"):
                w.writerow([r.window, f"{result.protocol}:{m}", f"{getattr(r, m):.4f}"])
            w.writerow([r.window, f"{result.protocol}:size", r.size])
    written.append(plot)

    manifest = out / "manifest.json"
    meta = {
        "version": __version__,
        "seed": cfg.seed,
        "config_sha256": cfg.digest(),
        "config": cfg.identity(),
        "outputs": [p.name for p in written],
    }
    manifest.write_text(json.dumps(meta, indent=1, sort_keys=True) + "\n", encoding="utf-8")
    written.append(manifest)
    return written


def validate_outputs(result: streaming.RunResult, written: Sequence[Path]) -> None:
    missing = [str(p) for p in written if not Path(p).is_file()]
    if missing:
        raise OSError(f"missing outputs: {missing}")
    rows, hyps = ingest.read_reports(written[0])
    if rows != result.rows or hyps != result.hypotheses:
        raise OSError(f"{written[0]} does not read back to the run's rows")


def cmd_run(args) -> int:
    overrides = {
        "protocol": args.protocol,
        "seed": args.seed,
        "threads": args.threads,
        "output_dir": args.output_dir,
        "csv": args.csv,
        "shuffle": args.shuffle,
        "metric": args.metric,
    }
    for item in args.set or []:
        key, sep, raw = item.partition("=")
        if not sep:
            print(f"error: --set expects key=value, got {item!r}", file=sys.stderr)
            return EXIT_CONFIG
        overrides[key.strip()] = yaml.safe_load(raw) if raw else None
    try:
        cfg = load_config(args.config, overrides)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG

    out = Path(cfg.output_dir or os.environ.get(OUTPUT_ENV) or "pwidb-out")
    try:
        result = execute(cfg, checkpoint_dir=out / "checkpoint", resume=args.resume)
    except streaming.ProtocolHalted as exc:
        print(f"run halted: {exc}; checkpoint: {exc.checkpoint}", file=sys.stderr)
        return EXIT_HALTED
    except (OSError, ingest.DataFormatError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        written = write_outputs(cfg, result, out)
        validate_outputs(result, written)
    except OSError as exc:
        print(f"output error: {exc}", file=sys.stderr)
        return EXIT_OUTPUT
    print(f"{result.protocol}: {len(result.rows)} window(s), average AUC {result.average('AUC'):.4f} -> {out}")
    return 0


def compare_reports(paths: Sequence, labels: Sequence[str] | None = None, metrics=("AUC", "F1")) -> list[list[str]]:
    """Side-by-side per-window metrics with deltas against the first report.

    Reports must share a window plan: the same number of windows and the same
    test-window sizes.
    """
    labels = list(labels) if labels else [Path(p).parent.name if Path(p).stem == "report" else Path(p).stem for p in paths]
    if len(labels) != len(paths):
        raise ValueError("one label per report")
    if len(set(labels)) != len(labels):
        labels = [f"{l}#{i + 1}" for i, l in enumerate(labels)]
    reports = [ingest.read_reports(p)[0] for p in paths]
    plan0 = [(r.window, r.test_minority + r.test_majority) for r in reports[0]]
    for p, rows in zip(paths[1:], reports[1:]):
        if [(r.window, r.test_minority + r.test_majority) for r in rows] != plan0:
            raise ValueError(f"{p} does not share the window plan of {paths[0]}")

    header = ["window"]
    for m in metrics:
        header += [f"{l}_{m}" for l in labels]
        header += [f"delta_{l}_{m}" for l in labels[1:]]
    grid = [header]

    def cells(values_by_report):
        out = []
        for m in metrics:
            vals = [v[m] for v in values_by_report]
            out += [f"{v:.4f}" for v in vals]
            out += [f"{v - vals[0]:.4f}" for v in vals[1:]]
        return out

    for i, (w, _) in enumerate(plan0):
        grid.append([str(w)] + cells([{m: getattr(rows[i], m) for m in metrics} for rows in reports]))
    if plan0:
        avgs = [{m: float(np.mean([getattr(r, m) for r in rows])) for m in metrics} for rows in reports]
        grid.append(["average"] + cells(avgs))
    return grid


def cmd_compare(args) -> int:
    try:
        grid = compare_reports(args.reports, args.labels, tuple(args.metric))
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    fh = open(args.out, "w", newline="", encoding="utf-8") if args.out else sys.stdout
    try:
        csv.writer(fh, lineterminator="\n").writerows(grid)
    finally:
        if args.out:
            fh.close()
    return 0


def cmd_gen(args) -> int:
    try:
        sc = ingest.SynthConfig(n=args.n, ir=args.ir, p=args.p, overlap=args.overlap, seed=args.seed)
        frame = ingest.gen_synthetic(sc)
        ingest.write_csv(frame, args.out)
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    return 0


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="pwidb", description=__doc__.split("\n")[0])
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="run one protocol and write reports")
    r.add_argument("config", nargs="?", help="YAML run config")
    r.add_argument("--protocol", choices=("batch", "accumulative", "pwidb"))
    r.add_argument("--csv")
    r.add_argument("--shuffle", type=int)
    r.add_argument("--metric", choices=("AUC", "F1"))
    r.add_argument("--seed", type=int)
    r.add_argument("--threads", type=int)
    r.add_argument("--output-dir", dest="output_dir")
    r.add_argument("--resume", help="checkpoint.npz written by a halted run")
    r.add_argument("--set", action="append", metavar="KEY=VALUE", help="override any config field")
    r.set_defaults(func=cmd_run)

    c = sub.add_parser("compare", help="per-window comparison grid of report CSVs")
    c.add_argument("reports", nargs="+")
    c.add_argument("--labels", nargs="+")
    c.add_argument("--metric", nargs="+", default=["AUC", "F1"], choices=("AUC", "F1"))
    c.add_argument("-o", "--out")
    c.set_defaults(func=cmd_compare)

    g = sub.add_parser("gen", help="write a synthetic dataset CSV")
    g.add_argument("out")
    g.add_argument("--n", type=int, default=40000)
    g.add_argument("--ir", type=float, default=100.0)
    g.add_argument("--p", type=int, default=10)
    g.add_argument("--overlap", type=float, default=2.0)
    g.add_argument("--seed", type=int, default=0)
    g.set_defaults(func=cmd_gen)
    return ap


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
