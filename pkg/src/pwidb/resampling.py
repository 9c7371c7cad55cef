"""Rebalancing techniques for binary imbalanced frames.

Every technique is a deterministic function of ``(spec, frame, seed)``. The
undersampling and editing rules only ever drop majority rows; ROS and SMOTE are
the only techniques that add minority rows.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np
from scipy.spatial import cKDTree

from . import _nnkernels
from .core import MAJORITY, MINORITY, Frame, concat
from .neighbors import KnnIndex

TECHNIQUES = ("Unbal", "RUS", "ROS", "SMOTE", "Tomek", "CNN", "OSS", "ENN", "NCL")

# ENN/NCL switch from plain exact k-NN to certificate screening above this size
CERTIFY_MIN_ROWS = 2000
CNN_PRESCAN_PAIRS = 5_000_000


class BalanceError(ValueError):
    pass


@dataclass(frozen=True)
class BalancerSpec:
    technique: str
    perc_over: float = 200
    perc_under: float = 200
    k: int | None = None

    def __post_init__(self):
        if self.technique not in TECHNIQUES:
            raise ValueError(f"unknown technique {self.technique!r}")
        if self.perc_over < 0 or self.perc_under < 0:
            raise ValueError("percentages must be >= 0")
        if self.k is not None and self.k < 1:
            raise ValueError("k must be >= 1")

    @property
    def neighbors(self) -> int:
        if self.k is not None:
            return self.k
        return 5 if self.technique == "SMOTE" else 3

    @property
    def label(self) -> str:
        t = self.technique
        if t == "SMOTE":
            return f"SMOTE(over={self.perc_over:g},under={self.perc_under:g},k={self.neighbors})"
        if t == "ROS":
            return f"ROS(over={self.perc_over:g})"
        if t == "RUS":
            return f"RUS(under={self.perc_under:g})"
        if t in ("ENN", "NCL"):
            return f"{t}(k={self.neighbors})"
        return t


def default_candidates() -> list[BalancerSpec]:
    return [BalancerSpec(t) for t in TECHNIQUES]


@dataclass(frozen=True)
class BalanceResult:
    balanced: Frame
    spec: BalancerSpec
    before: tuple[int, int]  # (n_min, n_maj)
    after: tuple[int, int]
    n_synthetic: int = 0
    # SMOTE only: (parent row, neighbour row, gap) per synthetic row, in output order
    parents: np.ndarray | None = None
    gaps: np.ndarray | None = None


def _require_both(frame: Frame):
    if frame.n_min == 0 or frame.n_maj == 0:
        raise BalanceError("cannot balance single-class data")


def _result(frame, out, spec, n_synth=0, parents=None, gaps=None) -> BalanceResult:
    out = out.with_provenance("balanced")
    return BalanceResult(
        out, spec, (frame.n_min, frame.n_maj), (out.n_min, out.n_maj), n_synth, parents, gaps
    )


def _keep(frame: Frame, drop: np.ndarray) -> Frame:
    mask = np.ones(len(frame), dtype=bool)
    mask[drop] = False
    return frame.take(np.flatnonzero(mask))


def apply(spec: BalancerSpec, frame: Frame, seed: int = 0) -> BalanceResult:
    t = spec.technique
    if t == "Unbal":
        return BalanceResult(frame, spec, (frame.n_min, frame.n_maj), (frame.n_min, frame.n_maj))
    _require_both(frame)
    if t == "ROS":
        res = random_resample(frame, "ROS", spec.perc_over, seed)
    elif t == "RUS":
        res = random_resample(frame, "RUS", spec.perc_under, seed)
    elif t == "SMOTE":
        res = smote(frame, spec.perc_over, spec.perc_under, spec.neighbors, seed)
    elif t == "Tomek":
        res = tomek_links(frame)[1]
    elif t == "CNN":
        res = cnn_condense(frame, seed)
    elif t == "OSS":
        res = oss(frame, seed)
    elif t == "ENN":
        res = enn_filter(frame, spec.neighbors)
    else:
        res = ncl_filter(frame, spec.neighbors)
    return replace(res, spec=spec)


def random_resample(frame: Frame, mode: str, perc: float, seed: int = 0) -> BalanceResult:
    """ROS replicates minority rows; RUS subsamples majority rows.

    ROS grows the minority to ``round(n_min * (1 + perc/100))``. RUS keeps
    ``min(n_maj, round(n_min * perc/100))`` majority rows.
    """
    _require_both(frame)
    rng = np.random.default_rng(seed)
    minority = np.flatnonzero(frame.y == MINORITY)
    majority = np.flatnonzero(frame.y == MAJORITY)
    if mode == "ROS":
        spec = BalancerSpec("ROS", perc_over=perc)
        extra = int(round(len(minority) * (1 + perc / 100))) - len(minority)
        if extra <= 0:
            return _result(frame, frame, spec)
        picks = minority[rng.integers(0, len(minority), size=extra)]
        return _result(frame, concat(frame, frame.take(picks)), spec)
    if mode == "RUS":
        spec = BalancerSpec("RUS", perc_under=perc)
        target = min(len(majority), int(round(len(minority) * perc / 100)))
        if target <= 0:
            raise BalanceError("RUS target majority size is 0")
        kept = np.sort(rng.choice(majority, size=target, replace=False))
        return _result(frame, frame.take(np.sort(np.concatenate([minority, kept]))), spec)
    raise ValueError(f"mode must be ROS or RUS, got {mode!r}")


def smote(frame: Frame, perc_over: float = 200, perc_under: float = 200, k: int = 5, seed: int = 0):
    """SMOTE oversampling followed by majority undersampling.

    Each minority row spawns ``floor(perc_over/100)`` synthetic rows plus one
    more with probability ``frac(perc_over/100)``; each lies on the segment to
    a uniformly chosen one of its k nearest minority neighbours. The majority
    is then subsampled to ``round(perc_under/100 * n_synthetic)`` rows
    (``perc_under == 0`` keeps the whole majority).
    """
    _require_both(frame)
    if k < 1:
        raise ValueError("k must be >= 1")
    minority = np.flatnonzero(frame.y == MINORITY)
    majority = np.flatnonzero(frame.y == MAJORITY)
    if len(minority) < 2:
        raise BalanceError("SMOTE needs at least 2 minority rows")
    spec = BalancerSpec("SMOTE", perc_over, perc_under, k)
    rng = np.random.default_rng(seed)

    whole, frac = divmod(perc_over / 100, 1)
    counts = np.full(len(minority), int(whole)) + (rng.random(len(minority)) < frac)
    Xmin = frame.X[minority]
    nn = KnnIndex(Xmin).query_rows(np.arange(len(minority)), k)
    parent = np.repeat(np.arange(len(minority)), counts)
    pick = rng.integers(0, nn.shape[1], size=len(parent))
    partner = nn[parent, pick]
    gap = rng.random(len(parent))
    synth_X = Xmin[parent] + gap[:, None] * (Xmin[partner] - Xmin[parent])
    n_synth = len(parent)

    if perc_under == 0:
        kept_maj = majority
    else:
        target = int(round(perc_under / 100 * n_synth))
        if target >= len(majority):
            kept_maj = majority
        else:
            kept_maj = np.sort(rng.choice(majority, size=target, replace=False))
    originals = frame.take(np.sort(np.concatenate([minority, kept_maj])))
    synthetic = Frame(synth_X, np.ones(n_synth, dtype=np.int8), provenance="synthetic")
    out = concat(originals, synthetic)
    parents = np.column_stack([minority[parent], minority[partner]]) if n_synth else np.empty((0, 2), int)
    return _result(frame, out, spec, n_synth, parents, gap)


def _nn1(X: np.ndarray, rows: np.ndarray, index: KnnIndex | None = None) -> np.ndarray:
    index = index or KnnIndex(X)
    return index.query_rows(rows, 1)[:, 0]


def find_tomek_links(X: np.ndarray, y: np.ndarray) -> set[tuple[int, int]]:
    # every link has a minority end, so only minority rows need a forward query
    if len(X) < 2:
        return set()
    index = KnnIndex(X)
    minority = np.flatnonzero(y == MINORITY)
    if len(minority) == 0:
        return set()
    fwd = _nn1(X, minority, index)
    cand = fwd[y[fwd] != y[minority]]
    links = set()
    if len(cand):
        back = dict(zip(cand.tolist(), _nn1(X, cand, index).tolist()))
        for a, b in zip(minority.tolist(), fwd.tolist()):
            if y[b] != y[a] and back[b] == a:
                links.add((min(a, b), max(a, b)))
    return links


def tomek_links(frame: Frame):
    """Mutual 1-NN opposite-class pairs, and the frame without their majority ends."""
    _require_both(frame)
    links = find_tomek_links(frame.X, frame.y)
    drop = sorted({a if frame.y[a] == MAJORITY else b for a, b in links})
    out = _keep(frame, np.asarray(drop, dtype=np.int64))
    return links, _result(frame, out, BalancerSpec("Tomek"))


def _cnn_mask(frame: Frame, seed: int, repeat: bool) -> np.ndarray:
    rng = np.random.default_rng(seed)
    minority = np.flatnonzero(frame.y == MINORITY)
    majority = np.flatnonzero(frame.y == MAJORITY)
    first = majority[rng.integers(len(majority))]
    store = np.sort(np.append(minority, first))
    order = majority[rng.permutation(len(majority))]
    X = np.ascontiguousarray(frame.X)
    best = np.full(len(order), np.inf)
    best_i = np.full(len(order), -1, dtype=np.int64)
    scanned = np.zeros(len(order), dtype=np.int64)
    if len(store) * len(order) > CNN_PRESCAN_PAIRS:
        # nearest member of the initial store by exact k-d search; the kernel
        # then only scans members added later
        near, d2 = KnnIndex(X[store]).query_points(X[order], 1, return_sqdist=True)
        best[:] = d2[:, 0]
        best_i[:] = store[near[:, 0]]
        scanned[:] = len(store)
    return _nnkernels.cnn_scan(X, np.ascontiguousarray(frame.y), store, order, repeat, best, best_i, scanned)


def cnn_condense(frame: Frame, seed: int = 0, repeat: bool = True) -> BalanceResult:
    """Hart's condensed nearest neighbour, seeded with every minority row.

    The store starts as all minority rows plus one seed-chosen majority row;
    majority rows are scanned in a seeded order and join the store when the
    store's 1-NN rule misclassifies them.
    """
    _require_both(frame)
    mask = _cnn_mask(frame, seed, repeat)
    return _result(frame, frame.take(np.flatnonzero(mask)), BalancerSpec("CNN"))


def oss(frame: Frame, seed: int = 0) -> BalanceResult:
    """One-sided selection: a single CNN pass, then Tomek cleaning."""
    _require_both(frame)
    condensed = frame.take(np.flatnonzero(_cnn_mask(frame, seed, repeat=False)))
    _, cleaned = tomek_links(condensed)
    return _result(frame, cleaned.balanced, BalancerSpec("OSS"))


def _vote_threshold(k: int) -> int:
    return k // 2 + 1


def majority_flipped(X: np.ndarray, y: np.ndarray, k: int) -> np.ndarray:
    """Majority rows whose k-NN vote (self excluded) is minority.

    Large frames are screened first: a row is certainly kept when it has
    ``k - need + 1`` majority rows strictly nearer than a lower bound on the
    distance to its ``need``-th nearest minority row. Only the unscreened rows
    get an exact k-NN query, so the result equals the plain exact scan.
    """
    n = len(y)
    majority = np.flatnonzero(y == MAJORITY)
    minority = np.flatnonzero(y == MINORITY)
    k = min(k, n - 1)
    if k < 1 or len(majority) == 0:
        return np.empty(0, dtype=np.int64)
    need = _vote_threshold(k)
    if len(minority) < need:
        return np.empty(0, dtype=np.int64)
    rows = majority
    if n >= CERTIFY_MIN_ROWS and len(majority) > k - need + 1:
        rows = majority[~_certified_kept(X, majority, minority, k, need)]
    if len(rows) == 0:
        return rows
    nn = KnnIndex(X).query_rows(rows, k)
    votes = (y[nn] == MINORITY).sum(axis=1)
    return rows[votes >= need]


def _certified_kept(X, majority, minority, k, need) -> np.ndarray:
    Xmaj = np.ascontiguousarray(X[majority])
    Xmin = np.ascontiguousarray(X[minority])
    # lower bound on the need-th minority distance
    if len(majority) * len(minority) <= 2e8:
        lb = np.sqrt(_nnkernels.kth_sqdist(Xmaj, Xmin, need))
    else:
        eps = 0.5
        d, _ = cKDTree(Xmin).query(Xmaj, k=need, eps=eps)
        lb = np.asarray(d).reshape(len(majority), -1)[:, -1] / (1 + eps)
    # upper bound on the (k-need+1)-th nearest other-majority distance
    m = k - need + 2  # +1 for the row itself
    d, _ = cKDTree(Xmaj).query(Xmaj, k=m, eps=2.0)
    ub = np.asarray(d).reshape(len(majority), -1)[:, -1]
    return ub < lb * (1 - 1e-9)


def enn_filter(frame: Frame, k: int = 3) -> BalanceResult:
    """Wilson editing restricted to the majority class."""
    _require_both(frame)
    drop = majority_flipped(frame.X, frame.y, k)
    return _result(frame, _keep(frame, drop), BalancerSpec("ENN", k=k))


def ncl_filter(frame: Frame, k: int = 3) -> BalanceResult:
    """Neighbourhood cleaning: ENN on the majority, plus the majority
    neighbours of every minority row that its own k-NN vote misclassifies."""
    _require_both(frame)
    drop = set(majority_flipped(frame.X, frame.y, k).tolist())
    minority = np.flatnonzero(frame.y == MINORITY)
    k_eff = min(k, len(frame) - 1)
    if k_eff >= 1:
        nn = KnnIndex(frame.X).query_rows(minority, k_eff)
        maj_votes = (frame.y[nn] == MAJORITY).sum(axis=1)
        wrong = maj_votes >= _vote_threshold(k_eff)
        for row in nn[wrong]:
            drop.update(int(j) for j in row if frame.y[j] == MAJORITY)
    drop = np.asarray(sorted(drop), dtype=np.int64)
    return _result(frame, _keep(frame, drop), BalancerSpec("NCL", k=k))


__all__ = [
    "TECHNIQUES",
    "BalancerSpec",
    "BalanceResult",
    "BalanceError",
    "apply",
    "random_resample",
    "smote",
    "tomek_links",
    "find_tomek_links",
    "cnn_condense",
    "oss",
    "enn_filter",
    "ncl_filter",
    "default_candidates",
    "majority_flipped",
]
