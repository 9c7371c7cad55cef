"""Data model: labeled frames, stratified splits, imbalance ratio and seeding."""

from __future__ import annotations

import hashlib
import threading
import warnings
from dataclasses import dataclass
from fractions import Fraction
from typing import NamedTuple, Sequence

import numpy as np

MAJORITY = 0
MINORITY = 1

PROVENANCES = ("raw", "balanced", "synthetic")

_id_lock = threading.Lock()
_next_id = 0


class NoMinorityError(ValueError):
    pass


def _fresh_ids(n: int) -> np.ndarray:
    # unique within a process only; ids tag instance identity, not content
    global _next_id
    with _id_lock:
        start = _next_id
        _next_id += n
    return np.arange(start, start + n, dtype=np.int64)


def _readonly(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a)
    a.flags.writeable = False
    return a


@dataclass(frozen=True)
class Instance:
    features: tuple[float, ...]
    label: int

    def __post_init__(self):
        if self.label not in (0, 1):
            raise ValueError(f"label must be 0 or 1, got {self.label!r}")
        if not all(np.isfinite(self.features)):
            raise ValueError("instance features must be finite")

    @property
    def p(self) -> int:
        return len(self.features)


@dataclass(frozen=True, eq=False)
class Frame:
    """Immutable labeled design matrix.

    ``ids`` tags every row with an identity that survives subsetting and
    concatenation; synthetic rows get fresh ids.
    """

    X: np.ndarray
    y: np.ndarray
    ids: np.ndarray = None
    provenance: str = "raw"

    def __post_init__(self):
        X = np.asarray(self.X, dtype=np.float64)
        y = np.asarray(self.y)
        if X.ndim == 1 and X.size == 0:
            X = X.reshape(0, 0)
        if X.ndim != 2:
            raise ValueError("X must be two-dimensional")
        if y.shape != (X.shape[0],):
            raise ValueError("y must have one label per row")
        if y.size and not np.isin(y, (0, 1)).all():
            raise ValueError("labels must be 0 or 1")
        if not np.isfinite(X).all():
            raise ValueError("features must be finite")
        if self.provenance not in PROVENANCES:
            raise ValueError(f"unknown provenance {self.provenance!r}")
        ids = _fresh_ids(len(y)) if self.ids is None else np.asarray(self.ids, dtype=np.int64)
        if ids.shape != y.shape:
            raise ValueError("ids must have one entry per row")
        object.__setattr__(self, "X", _readonly(X))
        object.__setattr__(self, "y", _readonly(y.astype(np.int8)))
        object.__setattr__(self, "ids", _readonly(ids))

    @classmethod
    def empty(cls, p: int) -> "Frame":
        return cls(np.empty((0, p)), np.empty(0, dtype=np.int8), np.empty(0, dtype=np.int64))

    @classmethod
    def from_instances(cls, instances: Sequence[Instance], p: int | None = None) -> "Frame":
        if not instances:
            return cls.empty(p or 0)
        X = np.array([inst.features for inst in instances], dtype=np.float64)
        y = np.array([inst.label for inst in instances], dtype=np.int8)
        if p is not None and X.shape[1] != p:
            raise ValueError(f"instances have {X.shape[1]} features, frame declares {p}")
        return cls(X, y)

    def __len__(self) -> int:
        return self.y.shape[0]

    def __getitem__(self, i: int) -> Instance:
        return Instance(tuple(float(v) for v in self.X[i]), int(self.y[i]))

    @property
    def p(self) -> int:
        return self.X.shape[1]

    @property
    def n_min(self) -> int:
        return int(np.count_nonzero(self.y == MINORITY))

    @property
    def n_maj(self) -> int:
        return len(self) - self.n_min

    def take(self, idx, provenance: str | None = None) -> "Frame":
        idx = np.asarray(idx, dtype=np.int64)
        return Frame(self.X[idx], self.y[idx], self.ids[idx], provenance or self.provenance)

    def with_provenance(self, provenance: str) -> "Frame":
        return Frame(self.X, self.y, self.ids, provenance)

    def equals(self, other: "Frame") -> bool:
        return (
            self.X.shape == other.X.shape
            and np.array_equal(self.X, other.X)
            and np.array_equal(self.y, other.y)
        )


def imbalance_ratio_exact(frame: Frame) -> Fraction:
    n_min = frame.n_min
    if n_min == 0:
        raise NoMinorityError("no minority class present")
    return Fraction(frame.n_maj, n_min)


def imbalance_ratio(frame: Frame) -> float:
    """Majority count over minority count."""
    return float(imbalance_ratio_exact(frame))


def ratio_from_counts(n_min: int, n_maj: int) -> float:
    if n_min == 0:
        raise NoMinorityError("no minority class present")
    return n_maj / n_min


def format_ir(ir: float) -> str:
    return f"{ir:.1f}"


def concat(a: Frame, b: Frame) -> Frame:
    if len(a) == 0 and a.p == 0:
        return b
    if len(b) == 0 and b.p == 0:
        return a
    if a.p != b.p:
        raise ValueError(f"feature count mismatch: {a.p} vs {b.p}")
    prov = a.provenance if a.provenance == b.provenance else "raw"
    return Frame(
        np.concatenate([a.X, b.X]),
        np.concatenate([a.y, b.y]),
        np.concatenate([a.ids, b.ids]),
        prov,
    )


class Split(NamedTuple):
    train: Frame
    test: Frame
    stratified: bool


def split_train_test(chunk: Frame, train_fraction: float, seed: int) -> Split:
    """Class-stratified random split; row order within each part is preserved.

    The train part always has ``round(train_fraction * n)`` rows. When a class
    has fewer than two rows the split falls back to simple random sampling and
    ``stratified`` is False.
    """
    if not 0 < train_fraction < 1:
        raise ValueError("train_fraction must lie in (0, 1)")
    n = len(chunk)
    if n == 0:
        raise ValueError("cannot split an empty chunk")
    rng = np.random.default_rng(seed)
    n_train = int(round(train_fraction * n))
    counts = [int(np.count_nonzero(chunk.y == c)) for c in (MAJORITY, MINORITY)]
    if min(counts) < 2:
        warnings.warn("class count below 2: falling back to unstratified split", stacklevel=2)
        picked = rng.permutation(n)[:n_train]
        stratified = False
    else:
        n_train_min = int(round(train_fraction * counts[MINORITY]))
        n_train_min = min(max(n_train_min, 1), counts[MINORITY] - 1)
        n_train_maj = min(max(n_train - n_train_min, 0), counts[MAJORITY])
        n_train_min = n_train - n_train_maj
        picked = []
        for c, k in ((MAJORITY, n_train_maj), (MINORITY, n_train_min)):
            members = np.flatnonzero(chunk.y == c)
            picked.append(members[rng.permutation(len(members))[:k]])
        picked = np.concatenate(picked)
        stratified = True
    mask = np.zeros(n, dtype=bool)
    mask[picked] = True
    return Split(chunk.take(np.flatnonzero(mask)), chunk.take(np.flatnonzero(~mask)), stratified)


@dataclass(frozen=True)
class SeedPolicy:
    """Derives independent child seeds from one master seed."""

    master: int = 0

    def child(self, purpose: str, index: int = 0) -> int:
        key = f"{self.master}:{purpose}:{index}".encode()
        return int.from_bytes(hashlib.blake2b(key, digest_size=8).digest(), "little")

    def rng(self, purpose: str, index: int = 0) -> np.random.Generator:
        return np.random.default_rng(self.child(purpose, index))

    def sub(self, purpose: str, index: int = 0) -> "SeedPolicy":
        return SeedPolicy(self.child(purpose, index))


def derive_seed(seed: int, purpose: str, index: int = 0) -> int:
    return SeedPolicy(seed).child(purpose, index)
