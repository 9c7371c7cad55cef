"""Racing selection of a rebalancing technique.

Candidates are evaluated fold by fold on stratified cross-validation splits of
the training frame. After every completed fold (from the second on) a Friedman
test over the survivors gates paired one-sided post-hoc tests against the
current best; candidates that test significantly worse drop out. The race ends
when one candidate is left, the folds run out, or the next fold would exceed
the evaluation budget.
"""

from __future__ import annotations

import csv
import logging
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, NamedTuple, Sequence

import numpy as np
from scipy import stats

from . import forest, metrics
from .core import MAJORITY, MINORITY, Frame, SeedPolicy
from .resampling import BalanceError, BalancerSpec, apply, default_candidates

log = logging.getLogger(__name__)

POSTHOC_TESTS = ("ttest", "wilcoxon")


class RaceError(RuntimeError):
    pass


@dataclass(frozen=True)
class RaceConfig:
    candidates: tuple[BalancerSpec, ...] = field(default_factory=lambda: tuple(default_candidates()))
    metric: str = "AUC"
    folds: int = 10
    max_exp: int | None = None  # candidate-fold evaluations; None -> folds * candidates
    alpha: float = 0.05
    forest: forest.ForestParams = forest.ForestParams()
    posthoc: str = "ttest"
    seed: int = 0
    threads: int = 1

    def __post_init__(self):
        object.__setattr__(self, "candidates", tuple(self.candidates))
        if not self.candidates:
            raise ValueError("race needs at least one candidate")
        if len(set(self.candidates)) != len(self.candidates):
            raise ValueError("race candidates must be distinct")
        if self.metric.upper() not in ("AUC", "F1"):
            raise ValueError(f"unknown metric {self.metric!r}")
        if self.folds < 1:
            raise ValueError("folds must be >= 1")
        if not 0 < self.alpha < 1:
            raise ValueError("alpha must lie in (0, 1)")
        if self.budget < len(self.candidates):
            raise ValueError(
                f"max_exp={self.budget} is smaller than one block of {len(self.candidates)} evaluations"
            )
        if self.posthoc not in POSTHOC_TESTS:
            raise ValueError(f"posthoc must be one of {POSTHOC_TESTS}")

    @property
    def budget(self) -> int:
        return self.max_exp if self.max_exp is not None else self.folds * len(self.candidates)


class Fold(NamedTuple):
    fit: Frame
    val: Frame


class Elimination(NamedTuple):
    fold: int  # 1-based index of the fold after which the candidate dropped out
    candidate: int
    p_value: float


@dataclass
class RaceOutcome:
    candidates: tuple[BalancerSpec, ...]
    winner_index: int
    scores: np.ndarray  # (candidates, folds), nan where not evaluated
    status: list[str]
    trace: list[Elimination]
    evaluations: int
    folds_completed: int
    metric: str = "AUC"

    @property
    def winner(self) -> BalancerSpec:
        return self.candidates[self.winner_index]

    def mean_scores(self) -> np.ndarray:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)
            return np.nanmean(self.scores[:, : self.folds_completed], axis=1)

    def trace_rows(self) -> list[dict]:
        dropped = {e.candidate: e for e in self.trace}
        rows = []
        for f in range(self.folds_completed):
            for c, spec in enumerate(self.candidates):
                s = self.scores[c, f]
                e = dropped.get(c)
                if np.isnan(s) and not (e and e.fold == f + 1):
                    continue
                status, p = "alive", ""
                if e is not None and e.fold == f + 1:
                    status = self.status[c]
                    p = "" if np.isnan(e.p_value) else repr(float(e.p_value))
                rows.append(
                    {
                        "fold": f + 1,
                        "candidate": spec.label,
                        "score": "" if np.isnan(s) else repr(float(s)),
                        "status": status,
                        "p_value": p,
                    }
                )
        return rows

    def write_trace(self, path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.DictWriter(fh, ["fold", "candidate", "score", "status", "p_value"], lineterminator="\n")
            w.writeheader()
            w.writerows(self.trace_rows())


def make_folds(train: Frame, folds: int, seed: int = 0) -> list[Fold]:
    """Stratified k-fold partition; every row lands in exactly one validation fold.

    If the minority has fewer rows than ``folds`` the fold count drops to the
    minority size (with a warning).
    """
    n_min = train.n_min
    if n_min < folds:
        if n_min < 2:
            raise ValueError("need at least 2 minority rows for cross-validation")
        warnings.warn(f"only {n_min} minority rows: using {n_min} folds instead of {folds}", stacklevel=2)
        folds = n_min
    if folds < 2:
        raise ValueError("need at least 2 folds")
    rng = np.random.default_rng(seed)
    assign = np.empty(len(train), dtype=np.int64)
    for c in (MINORITY, MAJORITY):
        members = np.flatnonzero(train.y == c)
        members = members[rng.permutation(len(members))]
        assign[members] = np.arange(len(members)) % folds
    out = []
    for f in range(folds):
        val = assign == f
        out.append(Fold(train.take(np.flatnonzero(~val)), train.take(np.flatnonzero(val))))
    return out


def fit_and_evaluate(train: Frame, test: Frame, params: forest.ForestParams) -> metrics.Evaluation:
    model = forest.fit(train, params)
    return metrics.evaluate(forest.predict_scores(model, test), test.y)


def evaluate_candidate(
    spec: BalancerSpec,
    fold: Fold,
    metric: str,
    classifier_params: forest.ForestParams,
    seed: int = 0,
) -> float:
    """Balance the fit part, grow a forest, score the untouched validation part.

    A balancer that cannot handle the fold yields ``nan``.
    """
    try:
        balanced = apply(spec, fold.fit, seed).balanced
    except BalanceError as exc:
        log.info("candidate %s failed: %s", spec.label, exc)
        return float("nan")
    model = forest.fit(balanced, classifier_params)
    return metrics.score(metric, forest.predict_scores(model, fold.val), fold.val.y)


def friedman_statistic(block) -> tuple[float, float]:
    """Friedman chi-square over an (n blocks x k candidates) score matrix.

    Ranks are taken within each block (average ranks for ties) and the
    statistic is referred to chi-square with k-1 degrees of freedom.
    """
    block = np.asarray(block, dtype=np.float64)
    n, k = block.shape
    if n < 2 or k < 2:
        raise ValueError("Friedman test needs at least 2 blocks and 2 candidates")
    if np.all(block == block[:, :1]):
        return 0.0, 1.0
    ranks = stats.rankdata(block, axis=1)
    R = ranks.sum(axis=0)
    stat = 12.0 / (n * k * (k + 1)) * float(np.dot(R, R)) - 3.0 * n * (k + 1)
    stat = max(stat, 0.0)
    return stat, float(stats.chi2.sf(stat, k - 1))


def paired_pvalue(better, worse, test: str = "ttest") -> float:
    """One-sided p-value for ``better`` exceeding ``worse`` on paired scores."""
    d = np.asarray(better, dtype=np.float64) - np.asarray(worse, dtype=np.float64)
    if len(d) < 2:
        return 1.0
    if np.all(d == d[0]):
        return 0.0 if d[0] > 0 else 1.0
    if test == "ttest":
        p = stats.ttest_rel(better, worse, alternative="greater").pvalue
    else:
        p = stats.wilcoxon(d, alternative="greater", zero_method="zsplit").pvalue
    return 1.0 if np.isnan(p) else float(p)


Evaluator = Callable[[int, BalancerSpec, int], float]


def race(train: Frame | None, config: RaceConfig, evaluator: Evaluator | None = None) -> RaceOutcome:
    """Run the race and return the winner with its full score history.

    ``evaluator(candidate_index, spec, fold_index)`` replaces the default
    balance-fit-score step; with it ``train`` may be None.
    """
    seeds = SeedPolicy(config.seed)
    cands = config.candidates
    k = len(cands)
    if evaluator is None:
        if train is None:
            raise ValueError("race needs a training frame")
        if train.n_min == 0 or train.n_maj == 0:
            raise RaceError("race needs both classes in the training frame")
        folds = make_folds(train, config.folds, seeds.child("folds"))

        def evaluator(c, spec, f):
            params = config.forest.replace(seed=seeds.child("forest", f), threads=1)
            return evaluate_candidate(spec, folds[f], config.metric, params, seeds.child(f"balance:{c}", f))

        n_folds = len(folds)
    else:
        n_folds = config.folds

    scores = np.full((k, n_folds), np.nan)
    status = ["alive"] * k
    alive = list(range(k))
    trace: list[Elimination] = []
    used = 0
    done = 0

    def drop(c, f, p, why="eliminated"):
        status[c] = why
        trace.append(Elimination(f, c, p))
        alive.remove(c)

    pool = ThreadPoolExecutor(config.threads) if config.threads > 1 else None
    try:
        for f in range(n_folds):
            if used + len(alive) > config.budget:
                break
            if pool is not None:
                vals = list(pool.map(lambda c: evaluator(c, cands[c], f), alive))
            else:
                vals = [evaluator(c, cands[c], f) for c in alive]
            for c, v in zip(list(alive), vals):
                scores[c, f] = v
            used += len(vals)
            done = f + 1
            for c in [c for c in alive if np.isnan(scores[c, f])]:
                drop(c, done, float("nan"), "failed")
            if len(alive) <= 1:
                break
            if done < 2:
                continue
            block = scores[alive, :done].T
            if len(alive) > 2:
                _, p_global = friedman_statistic(block)
                if p_global >= config.alpha:
                    continue
            best = _leader(block, alive)
            for c in [c for c in alive if c != best]:
                p = paired_pvalue(scores[best, :done], scores[c, :done], config.posthoc)
                if p < config.alpha:
                    drop(c, done, p)
    finally:
        if pool is not None:
            pool.shutdown()

    if not alive:
        raise RaceError("every candidate failed")
    means = scores[alive, :done].mean(axis=1)
    winner = alive[int(np.argmax(means))]
    return RaceOutcome(cands, winner, scores, status, trace, used, done, config.metric.upper())


def _leader(block: np.ndarray, alive: Sequence[int]) -> int:
    # highest mean within-block rank; ties by mean score, then lowest index
    mean_rank = stats.rankdata(block, axis=1).mean(axis=0)
    mean_score = block.mean(axis=0)
    order = sorted(range(len(alive)), key=lambda j: (-mean_rank[j], -mean_score[j], alive[j]))
    return alive[order[0]]
