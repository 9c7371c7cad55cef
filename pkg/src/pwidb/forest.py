"""Random forest of Gini trees producing vote-fraction scores."""

from __future__ import annotations

import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import _treekernels as K
from .core import Frame, Instance, SeedPolicy

FORMAT_TAG = "pwidb-forest-v1"


@dataclass(frozen=True)
class ForestParams:
    ntree: int = 100
    mtry: int | None = None  # None -> round(sqrt(p))
    min_leaf: int = 1
    max_depth: int | None = None
    seed: int = 0
    threads: int = 1

    def __post_init__(self):
        if self.ntree < 1:
            raise ValueError("ntree must be >= 1")
        if self.min_leaf < 1:
            raise ValueError("min_leaf must be >= 1")
        if self.mtry is not None and self.mtry < 1:
            raise ValueError("mtry must be >= 1")

    def resolve_mtry(self, p: int) -> int:
        m = self.mtry if self.mtry is not None else max(1, int(round(math.sqrt(p))))
        if not 1 <= m <= p:
            raise ValueError(f"mtry={m} outside [1, {p}]")
        return m

    def replace(self, **kw) -> "ForestParams":
        return ForestParams(**{**asdict(self), **kw})


@dataclass
class Tree:
    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    count0: np.ndarray
    count1: np.ndarray

    @property
    def n_nodes(self) -> int:
        return len(self.feature)


@dataclass
class ForestModel:
    trees: list[Tree]
    params: ForestParams
    p: int
    class_counts: tuple[int, int]
    _packed: tuple | None = field(default=None, repr=False, compare=False)

    @property
    def ntree(self) -> int:
        return len(self.trees)

    def _pack(self):
        if self._packed is None:
            offsets = np.zeros(len(self.trees) + 1, dtype=np.int64)
            offsets[1:] = np.cumsum([t.n_nodes for t in self.trees])
            cat = [
                np.concatenate([getattr(t, name) for t in self.trees])
                for name in ("feature", "threshold", "left", "right", "count0", "count1")
            ]
            self._packed = (offsets, *cat)
        return self._packed

    def votes(self, X: np.ndarray) -> np.ndarray:
        X = np.ascontiguousarray(np.atleast_2d(X), dtype=np.float64)
        if X.shape[1] != self.p:
            raise ValueError(f"expected {self.p} features, got {X.shape[1]}")
        return K.count_votes(X, *self._pack())

    def scores(self, X: np.ndarray) -> np.ndarray:
        return self.votes(X) / self.ntree

    def save(self, path) -> None:
        """Write a self-describing ``.npz`` archive; loading it is exact."""
        offsets, *cat = self._pack()
        meta = {
            "format": FORMAT_TAG,
            "params": asdict(self.params),
            "p": self.p,
            "class_counts": list(self.class_counts),
        }
        names = ("feature", "threshold", "left", "right", "count0", "count1")
        with open(path, "wb") as fh:
            np.savez(fh, meta=np.array(json.dumps(meta)), offsets=offsets, **dict(zip(names, cat)))

    @classmethod
    def load(cls, path) -> "ForestModel":
        with np.load(Path(path), allow_pickle=False) as z:
            meta = json.loads(str(z["meta"]))
            if meta.get("format") != FORMAT_TAG:
                raise ValueError(f"{path}: not a forest archive")
            offsets = z["offsets"]
            names = ("feature", "threshold", "left", "right", "count0", "count1")
            arrays = {k: z[k] for k in names}
        trees = [
            Tree(**{k: arrays[k][offsets[t] : offsets[t + 1]].copy() for k in names})
            for t in range(len(offsets) - 1)
        ]
        return cls(trees, ForestParams(**meta["params"]), meta["p"], tuple(meta["class_counts"]))


def _grow(X, y, presorted, mtry, min_leaf, max_depth, tree_seed):
    tree_seed = np.uint64(tree_seed)
    weight = K.bootstrap_weights(tree_seed, len(y))
    return Tree(*K.grow_tree(X, y, presorted, weight, mtry, min_leaf, max_depth, tree_seed))


def fit(train: Frame, params: ForestParams = ForestParams()) -> ForestModel:
    """Grow ``params.ntree`` trees, each on its own bootstrap sample.

    Tree ``t`` is seeded from ``(params.seed, "tree", t)`` so the model does not
    depend on how many threads build it.
    """
    if len(train) == 0:
        raise ValueError("cannot fit a forest on an empty frame")
    X = np.ascontiguousarray(train.X)
    y = np.ascontiguousarray(train.y, dtype=np.int8)
    mtry = params.resolve_mtry(train.p)
    max_depth = -1 if params.max_depth is None else params.max_depth
    seeds = SeedPolicy(params.seed)
    tree_seeds = [seeds.child("tree", t) for t in range(params.ntree)]
    presorted = np.ascontiguousarray(np.argsort(X, axis=0, kind="stable"))

    def job(s):
        return _grow(X, y, presorted, mtry, params.min_leaf, max_depth, s)

    if params.threads > 1:
        with ThreadPoolExecutor(params.threads) as pool:
            trees = list(pool.map(job, tree_seeds))
    else:
        trees = [job(s) for s in tree_seeds]
    return ForestModel(trees, params, train.p, (train.n_maj, train.n_min))


def _as_row(instance) -> np.ndarray:
    if isinstance(instance, Instance):
        return np.asarray(instance.features, dtype=np.float64)
    return np.asarray(instance, dtype=np.float64)


def predict_score(model: ForestModel, instance) -> float:
    row = _as_row(instance)
    if row.shape != (model.p,):
        raise ValueError(f"expected {model.p} features, got {row.shape}")
    return float(model.scores(row[None, :])[0])


def predict_label(model: ForestModel, instance, threshold: float = 0.5) -> int:
    return int(predict_score(model, instance) >= threshold)


def predict_scores(model: ForestModel, frame_or_X) -> np.ndarray:
    X = frame_or_X.X if isinstance(frame_or_X, Frame) else frame_or_X
    return model.scores(X)


def predict_labels(model: ForestModel, frame_or_X, threshold: float = 0.5) -> np.ndarray:
    return (predict_scores(model, frame_or_X) >= threshold).astype(np.int8)
