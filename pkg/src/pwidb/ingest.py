"""CSV datasets, the synthetic imbalanced stream, and report files."""

from __future__ import annotations

import csv
import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
import pandas as pd

from .core import MAJORITY, MINORITY, Frame
from .streaming import REPORT_COLUMNS, Hypothesis, ReportRow

ECC_COLUMNS = ("Time", *(f"V{i}" for i in range(1, 29)), "Amount", "Class")
HYPOTHESIS_COLUMNS = ("j", "technique", "carried_size", "metric", "post_IR")
_INT_COLUMNS = {"window", "size", "train_minority", "train_majority", "bal_minority", "bal_majority", "test_minority", "test_majority"}


class DataFormatError(ValueError):
    pass


@dataclass(frozen=True)
class CsvSchema:
    columns: tuple[str, ...] = ECC_COLUMNS
    label: str = "Class"
    positive: str = "1"
    negative: str = "0"

    def __post_init__(self):
        if self.label not in self.columns:
            raise ValueError(f"label column {self.label!r} not in schema")

    @property
    def features(self) -> tuple[str, ...]:
        return tuple(c for c in self.columns if c != self.label)

    @classmethod
    def for_features(cls, p: int) -> "CsvSchema":
        if p == 30:
            return cls()
        return cls(tuple(f"V{i}" for i in range(1, p + 1)) + ("Class",))


def load_csv(path, schema: CsvSchema | None = None) -> Frame:
    """Read a labeled CSV in file order. Without a schema, every column but
    ``Class`` is a feature."""
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(path)
    raw = pd.read_csv(path, dtype=str, keep_default_na=False, encoding="utf-8")
    if schema is None:
        if "Class" not in raw.columns:
            raise DataFormatError(f"{path}: no 'Class' column")
        schema = CsvSchema(tuple(raw.columns))
    missing = [c for c in schema.columns if c not in raw.columns]
    if missing:
        raise DataFormatError(f"{path}: missing columns {missing}")

    X = np.empty((len(raw), len(schema.features)), dtype=np.float64)
    for j, col in enumerate(schema.features):
        cells = raw[col].str.strip()
        try:
            # numpy's string conversion is correctly rounded; pandas' fast parser is not
            vals = cells.to_numpy().astype(np.float64)
        except ValueError:
            vals = pd.to_numeric(cells, errors="coerce").to_numpy(dtype=np.float64)
        bad = np.flatnonzero(~np.isfinite(vals))
        if len(bad):
            r = int(bad[0])
            raise DataFormatError(f"{path}: row {r + 2}, column {col!r}: cannot parse {raw[col].iloc[r]!r}")
        X[:, j] = vals
    lab = raw[schema.label].str.strip().str.strip('"')
    y = np.where(lab == schema.positive, MINORITY, MAJORITY).astype(np.int8)
    bad = np.flatnonzero((lab != schema.positive) & (lab != schema.negative))
    if len(bad):
        r = int(bad[0])
        raise DataFormatError(f"{path}: row {r + 2}, column {schema.label!r}: unknown label {lab.iloc[r]!r}")
    return Frame(X, y)


def write_csv(frame: Frame, path, schema: CsvSchema | None = None) -> None:
    schema = schema or CsvSchema.for_features(frame.p)
    if len(schema.features) != frame.p:
        raise ValueError(f"schema has {len(schema.features)} features, frame has {frame.p}")
    label_pos = schema.columns.index(schema.label)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(schema.columns)
        for x, lab in zip(frame.X.tolist(), frame.y.tolist()):
            cells = [repr(v) for v in x]
            cells.insert(label_pos, schema.positive if lab == MINORITY else schema.negative)
            w.writerow(cells)


def shuffle_frame(frame: Frame, seed: int) -> Frame:
    return frame.take(np.random.default_rng(seed).permutation(len(frame)))


@dataclass(frozen=True)
class SynthConfig:
    """Two Gaussian clusters per class.

    The classes are offset along feature 0 by ``10 / (1 + overlap)`` standard
    deviations, so ``overlap=0`` puts them 10 sigma apart. Within a class the
    two clusters are 4 sigma apart along feature 1 (majority) or feature 2
    (minority). ``means`` overrides the layout: four vectors ordered
    majority-a, majority-b, minority-a, minority-b.
    """

    n: int = 10000
    ir: float = 100.0
    p: int = 10
    overlap: float = 1.0
    scale: float = 1.0
    minority_scale: float | None = None
    means: tuple | None = None
    seed: int = 0

    def __post_init__(self):
        if self.n < 0:
            raise ValueError("n must be >= 0")
        if self.ir < 1:
            raise ValueError("ir must be >= 1")
        if self.p < 3 and self.means is None:
            raise ValueError("the default cluster layout needs p >= 3")
        if self.p < 1:
            raise ValueError("p must be >= 1")
        if self.overlap < 0:
            raise ValueError("overlap must be >= 0")

    def class_counts(self) -> tuple[int, int]:
        n_min = int(round(self.n / (self.ir + 1)))
        return n_min, self.n - n_min

    def cluster_means(self) -> np.ndarray:
        if self.means is not None:
            m = np.asarray(self.means, dtype=np.float64)
            if m.shape != (4, self.p):
                raise ValueError(f"means must have shape (4, {self.p})")
            return m
        sep = 10.0 / (1.0 + self.overlap) * self.scale
        m = np.zeros((4, self.p))
        m[1, 1] = 4.0 * self.scale
        m[2, 0] = sep
        m[3, 0] = sep
        m[3, 2] = 4.0 * self.scale
        return m

    def cluster_scales(self) -> np.ndarray:
        ms = self.scale if self.minority_scale is None else self.minority_scale
        return np.array([self.scale, self.scale, ms, ms])


def gen_synthetic(cfg: SynthConfig, return_clusters: bool = False):
    """Draw the stream; rows arrive in a seeded random order."""
    rng = np.random.default_rng(cfg.seed)
    n_min, n_maj = cfg.class_counts()
    sizes = [n_maj - n_maj // 2, n_maj // 2, n_min - n_min // 2, n_min // 2]
    means, scales = cfg.cluster_means(), cfg.cluster_scales()
    X = np.concatenate([rng.normal(means[c], scales[c], size=(sizes[c], cfg.p)) for c in range(4)])
    cluster = np.repeat(np.arange(4), sizes)
    order = rng.permutation(cfg.n)
    X, cluster = X[order], cluster[order]
    frame = Frame(X, (cluster >= 2).astype(np.int8), provenance="synthetic")
    return (frame, cluster) if return_clusters else frame


def _fmt(col: str, v) -> str:
    if col in _INT_COLUMNS:
        return str(int(v))
    if col in ("train_IR", "bal_IR"):
        return "inf" if math.isinf(v) else f"{v:.1f}"
    if col in ("AUC", "F1"):
        return f"{v:.4f}"
    return str(v)


def sidecar_path(path) -> Path:
    path = Path(path)
    return path.with_name(path.stem + ".full.json")


def hypotheses_path(path) -> Path:
    path = Path(path)
    return path.with_name(path.stem + ".hypotheses.csv")


def write_reports(rows: Sequence[ReportRow], hypotheses: Sequence[Hypothesis], path) -> list[Path]:
    """Write the report CSV, the hypothesis CSV and a full-precision sidecar.

    The CSVs round metrics to 4 decimals and IRs to 1 decimal; ``read_reports``
    restores exact values from the sidecar.
    """
    path = Path(path)
    try:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(REPORT_COLUMNS)
            for r in rows:
                d = r.as_dict()
                w.writerow([_fmt(c, d[c]) for c in REPORT_COLUMNS])
        hpath = hypotheses_path(path)
        with open(hpath, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(HYPOTHESIS_COLUMNS)
            for h in hypotheses:
                ir = "inf" if math.isinf(h.post_IR) else f"{h.post_IR:.1f}"
                w.writerow([h.j, h.technique, h.carried_size, h.metric, ir])
        spath = sidecar_path(path)
        full = {"rows": [r.as_dict() for r in rows], "hypotheses": [asdict(h) for h in hypotheses]}
        spath.write_text(json.dumps(full, indent=1, sort_keys=True) + "\n", encoding="utf-8")
    except OSError as exc:
        raise OSError(f"writing reports to {path}: {exc}") from exc
    return [path, hpath, spath]


def read_reports(path) -> tuple[list[ReportRow], list[Hypothesis]]:
    path = Path(path)
    spath = sidecar_path(path)
    try:
        if spath.exists():
            full = json.loads(spath.read_text(encoding="utf-8"))
            return [ReportRow(**r) for r in full["rows"]], [Hypothesis(**h) for h in full["hypotheses"]]
        rows = []
        with open(path, newline="", encoding="utf-8") as fh:
            for rec in csv.DictReader(fh):
                rows.append(
                    ReportRow(
                        **{
                            c: (int(rec[c]) if c in _INT_COLUMNS else rec[c] if c == "technique" else float(rec[c]))
                            for c in REPORT_COLUMNS
                        }
                    )
                )
    except OSError as exc:
        raise OSError(f"reading reports from {path}: {exc}") from exc
    return rows, []
