"""Windowed protocols: batch, accumulative and piece-wise incremental balancing.

All three protocols split every chunk 90/10 with the same seeds, so their test
windows are identical and their rows are directly comparable. Test data always
accumulates raw; what differs is the training window:

* accumulative: ``W_j = D_1 + ... + D_j`` (raw train parts);
* pwidb: ``W_1 = D_1`` and ``W_{j+1} = S_j + D_{j+1}``, where ``S_j`` is the
  whole balanced training frame produced for window ``j``.
"""

from __future__ import annotations

import json
import logging
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Sequence

import numpy as np

from . import forest, racing
from .core import Frame, SeedPolicy, concat, imbalance_ratio, split_train_test
from .metrics import Evaluation, UndefinedMetricError
from .resampling import BalanceError, BalanceResult, BalancerSpec, apply

log = logging.getLogger(__name__)

PAPER_ECC_CHUNKS = (50000, 50000, 40000, 40000, 20000, 20000, 30000, 34807)
REPORT_COLUMNS = (
    "window",
    "size",
    "train_minority",
    "train_majority",
    "train_IR",
    "technique",
    "bal_minority",
    "bal_majority",
    "bal_IR",
    "test_minority",
    "test_majority",
    "AUC",
    "F1",
)
UNBAL = BalancerSpec("Unbal")


class ProtocolHalted(RuntimeError):
    def __init__(self, msg, checkpoint=None):
        super().__init__(msg)
        self.checkpoint = checkpoint


@dataclass(frozen=True)
class ChunkPlan:
    sizes: tuple[int, ...]
    train_fraction: float = 0.9
    truncated: bool = False

    def __post_init__(self):
        if not self.sizes or any(s <= 0 for s in self.sizes):
            raise ValueError("chunk sizes must be positive")
        if not 0 < self.train_fraction < 1:
            raise ValueError("train_fraction must lie in (0, 1)")

    @property
    def total(self) -> int:
        return sum(self.sizes)

    def cumulative(self) -> list[int]:
        return np.cumsum(self.sizes).tolist()

    def train_sizes(self) -> list[int]:
        return [int(round(self.train_fraction * s)) for s in self.sizes]


def plan_chunks(total: int, mode: str = "paper_ecc", m: int = 8, train_fraction: float = 0.9) -> ChunkPlan:
    """Chunk sizes for a stream of ``total`` rows.

    ``paper_ecc`` is the fixed eight-chunk layout of the credit-card stream,
    cut short (and flagged) when ``total`` is smaller; ``equal`` gives ``m``
    near-equal chunks.
    """
    if mode == "equal":
        if m < 1 or total < m:
            raise ValueError(f"cannot cut {total} rows into {m} chunks")
        base, extra = divmod(total, m)
        return ChunkPlan(tuple(base + (i < extra) for i in range(m)), train_fraction)
    if mode != "paper_ecc":
        raise ValueError(f"unknown chunk plan {mode!r}")
    if total < len(PAPER_ECC_CHUNKS):
        raise ValueError("fewer rows than chunks")
    sizes, left = [], total
    for s in PAPER_ECC_CHUNKS:
        if left <= 0:
            break
        sizes.append(min(s, left))
        left -= s
    truncated = total < sum(PAPER_ECC_CHUNKS)
    return ChunkPlan(tuple(sizes), train_fraction, truncated)


def cut_chunks(data: Frame, plan: ChunkPlan) -> list[Frame]:
    if plan.total > len(data):
        raise ValueError(f"plan needs {plan.total} rows, data has {len(data)}")
    bounds = [0, *plan.cumulative()]
    return [data.take(np.arange(a, b)) for a, b in zip(bounds, bounds[1:])]


@dataclass
class ReportRow:
    window: int
    size: int
    train_minority: int
    train_majority: int
    train_IR: float
    technique: str
    bal_minority: int
    bal_majority: int
    bal_IR: float
    test_minority: int
    test_majority: int
    AUC: float
    F1: float

    def as_dict(self) -> dict:
        return asdict(self)


@dataclass
class Hypothesis:
    """What window ``j`` settled on: the balancer, the carried frame and its IR."""

    j: int
    technique: str
    carried_size: int
    metric: str
    classifier: str
    pre_IR: float
    post_IR: float
    auc: float
    f1: float


@dataclass
class WindowState:
    j: int
    chunk_train: Frame
    chunk_test: Frame
    train_window: Frame
    test_window: Frame

    @property
    def ir_before(self) -> float:
        return _safe_ir(self.train_window)


@dataclass
class RunResult:
    protocol: str
    rows: list[ReportRow] = field(default_factory=list)
    hypotheses: list[Hypothesis] = field(default_factory=list)
    races: list[racing.RaceOutcome | None] = field(default_factory=list)

    def average(self, metric: str) -> float:
        vals = [getattr(r, metric) for r in self.rows]
        return float(np.mean(vals)) if vals else float("nan")


def _safe_ir(frame: Frame) -> float:
    return imbalance_ratio(frame) if frame.n_min else float("inf")


def _classifier_tag(params: forest.ForestParams) -> str:
    return f"RF(ntree={params.ntree})"


class WindowManager:
    """Keeps the active train/test windows of a stream."""

    def __init__(self, mode: str):
        if mode not in ("accumulative", "pwidb"):
            raise ValueError(f"unknown window mode {mode!r}")
        self.mode = mode
        self.j = 0
        self.train: Frame | None = None
        self.test: Frame | None = None

    def open(self, chunk_train: Frame, chunk_test: Frame) -> WindowState:
        self.j += 1
        self.train = chunk_train if self.train is None else concat(self.train, chunk_train)
        self.test = chunk_test if self.test is None else concat(self.test, chunk_test)
        return WindowState(self.j, chunk_train, chunk_test, self.train, self.test)

    def close(self, carried: Frame) -> None:
        # accumulative windows keep the raw data; pwidb swaps in the balanced frame
        if self.mode == "pwidb":
            self.train = carried


class Protocol:
    """Shared window loop. Subclasses may override ``select`` and ``balance``."""

    name = "accumulative"
    window_mode = "accumulative"

    def __init__(
        self,
        race_config: racing.RaceConfig | None,
        forest_params: forest.ForestParams = forest.ForestParams(),
        seed: int = 0,
        carry_policy: str = "always",
    ):
        self.race_config = race_config
        self.forest_params = forest_params
        self.seeds = SeedPolicy(seed)
        self.carry_policy = carry_policy
        self._carry_threshold = _parse_carry_policy(carry_policy)

    def splits(self, chunks: Sequence[Frame], train_fraction: float):
        for j, chunk in enumerate(chunks, start=1):
            yield split_train_test(chunk, train_fraction, self.seeds.child("split", j))

    def select(self, state: WindowState) -> tuple[BalancerSpec, racing.RaceOutcome | None]:
        if self.race_config is None:
            return UNBAL, None
        cfg = replace(self.race_config, seed=self.seeds.child("race", state.j))
        outcome = racing.race(state.train_window, cfg)
        return outcome.winner, outcome

    def balance(self, state: WindowState, spec: BalancerSpec) -> BalanceResult:
        return apply(spec, state.train_window, self.seeds.child("balance", state.j))

    def evaluate(self, state: WindowState, train: Frame) -> Evaluation:
        params = self.forest_params.replace(seed=self.seeds.child("forest", state.j))
        return racing.fit_and_evaluate(train, state.test_window, params)

    def carried(self, state: WindowState, result: BalanceResult, outcome) -> Frame:
        if self._carry_threshold is None or outcome is None:
            return result.balanced
        means = outcome.mean_scores()
        unbal = [i for i, c in enumerate(outcome.candidates) if c.technique == "Unbal"]
        base = means[unbal[0]] if unbal and not np.isnan(means[unbal[0]]) else -np.inf
        gain = means[outcome.winner_index] - base
        return result.balanced if gain >= self._carry_threshold else state.train_window

    def step(self, state: WindowState) -> tuple[ReportRow, Hypothesis, racing.RaceOutcome | None, Frame]:
        spec, outcome = self.select(state)
        result = self.balance(state, spec)
        S = result.balanced
        ev = self.evaluate(state, S)
        tw = state.train_window
        row = ReportRow(
            window=state.j,
            size=len(tw),
            train_minority=tw.n_min,
            train_majority=tw.n_maj,
            train_IR=_safe_ir(tw),
            technique=spec.technique,
            bal_minority=S.n_min,
            bal_majority=S.n_maj,
            bal_IR=_safe_ir(S),
            test_minority=state.test_window.n_min,
            test_majority=state.test_window.n_maj,
            AUC=ev.auc,
            F1=ev.f1,
        )
        metric = self.race_config.metric.upper() if self.race_config else "AUC"
        hyp = emit_hypothesis(state, spec, S, metric, self.forest_params, ev)
        return row, hyp, outcome, self.carried(state, result, outcome)

    def run(self, chunks: Sequence[Frame], train_fraction: float = 0.9, checkpoint_dir=None, resume=None) -> RunResult:
        result = RunResult(self.name)
        manager = WindowManager(self.window_mode)
        start = 1
        if resume is not None:
            start = _restore(resume, manager, result)
        for j, split in enumerate(self.splits(chunks, train_fraction), start=1):
            if j < start:
                continue
            state = manager.open(split.train, split.test)
            try:
                row, hyp, outcome, carry = self.step(state)
            except (racing.RaceError, BalanceError, UndefinedMetricError) as exc:
                path = None
                if checkpoint_dir is not None:
                    path = _checkpoint(checkpoint_dir, j, manager, result, state)
                raise ProtocolHalted(f"window {j} failed: {exc}", path) from exc
            manager.close(carry)
            result.rows.append(row)
            result.hypotheses.append(hyp)
            result.races.append(outcome)
            log.info("%s window %d: %s size=%d AUC=%.4f", self.name, j, row.technique, row.size, row.AUC)
        return result


class Accumulative(Protocol):
    pass


class Pwidb(Protocol):
    name = "pwidb"
    window_mode = "pwidb"


def _parse_carry_policy(policy: str) -> float | None:
    if policy == "always":
        return None
    if policy.startswith("improve_threshold"):
        _, _, tau = policy.partition(":")
        return float(tau or 0.0)
    raise ValueError(f"unknown carry policy {policy!r}")


def emit_hypothesis(
    state: WindowState,
    spec: BalancerSpec,
    balanced: Frame,
    metric: str,
    params: forest.ForestParams,
    ev: Evaluation | None = None,
) -> Hypothesis:
    return Hypothesis(
        j=state.j,
        technique=spec.technique,
        carried_size=len(balanced),
        metric=metric,
        classifier=_classifier_tag(params),
        pre_IR=state.ir_before,
        post_IR=_safe_ir(balanced),
        auc=ev.auc if ev else float("nan"),
        f1=ev.f1 if ev else float("nan"),
    )


def run_batch(
    frame: Frame,
    race_config: racing.RaceConfig | None,
    forest_params: forest.ForestParams = forest.ForestParams(),
    seed: int = 0,
    train_fraction: float = 0.9,
) -> RunResult:
    """One 90/10 split of the whole frame; optional race on the 90%."""
    res = Accumulative(race_config, forest_params, seed).run([frame], train_fraction)
    res.protocol = "batch"
    return res


def run_accumulative(
    chunks: Sequence[Frame],
    race_config: racing.RaceConfig | None,
    forest_params: forest.ForestParams = forest.ForestParams(),
    seed: int = 0,
    train_fraction: float = 0.9,
) -> RunResult:
    return Accumulative(race_config, forest_params, seed).run(chunks, train_fraction)


def run_pwidb(
    chunks: Sequence[Frame],
    race_config: racing.RaceConfig,
    forest_params: forest.ForestParams = forest.ForestParams(),
    seed: int = 0,
    train_fraction: float = 0.9,
    carry_policy: str = "always",
    checkpoint_dir=None,
    resume=None,
) -> RunResult:
    if race_config is None:
        raise ValueError("pwidb needs a race configuration")
    proto = Pwidb(race_config, forest_params, seed, carry_policy)
    return proto.run(chunks, train_fraction, checkpoint_dir, resume)


def _frame_arrays(prefix: str, frame: Frame | None) -> dict:
    if frame is None:
        return {}
    return {f"{prefix}_X": frame.X, f"{prefix}_y": frame.y, f"{prefix}_ids": frame.ids}


def _checkpoint(directory, j, manager: WindowManager, result: RunResult, state: WindowState) -> Path:
    """Save everything needed to re-enter the loop at window ``j``."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    # the window that failed is rebuilt on resume, so store what preceded it
    prev_train = _without_tail(manager.train, len(state.chunk_train))
    prev_test = _without_tail(manager.test, len(state.chunk_test))
    path = directory / "checkpoint.npz"
    meta = {
        "next_window": j,
        "mode": manager.mode,
        "rows": [r.as_dict() for r in result.rows],
        "hypotheses": [asdict(h) for h in result.hypotheses],
    }
    with open(path, "wb") as fh:
        np.savez(fh, meta=np.array(json.dumps(meta)), **_frame_arrays("train", prev_train), **_frame_arrays("test", prev_test))
    return path


def _without_tail(frame: Frame, n: int) -> Frame | None:
    if len(frame) == n:
        return None
    return frame.take(np.arange(len(frame) - n))


def _restore(path, manager: WindowManager, result: RunResult) -> int:
    with np.load(path, allow_pickle=False) as z:
        meta = json.loads(str(z["meta"]))
        if meta["mode"] != manager.mode:
            raise ValueError(f"checkpoint is for {meta['mode']}, not {manager.mode}")
        if "train_X" in z:
            manager.train = Frame(z["train_X"], z["train_y"], z["train_ids"])
            manager.test = Frame(z["test_X"], z["test_y"], z["test_ids"])
    manager.j = meta["next_window"] - 1
    result.rows.extend(ReportRow(**r) for r in meta["rows"])
    result.hypotheses.extend(Hypothesis(**h) for h in meta["hypotheses"])
    result.races.extend([None] * len(meta["rows"]))
    return meta["next_window"]
