"""Exact Euclidean k-nearest-neighbour queries.

Ordering is by squared distance, ties broken by ascending row index. The
brute-force scan is the reference; ``KnnIndex`` accelerates batch queries with
a k-d tree and re-ranks candidates by exact squared distance so the results are
identical to the scan.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree

from .core import Frame, Instance

# below this size the O(n^2) scan beats building a tree
_BRUTE_LIMIT = 256


@dataclass(frozen=True)
class NeighborList:
    query_index: int
    indices: np.ndarray
    distances: np.ndarray
    short: bool = False

    def __len__(self):
        return len(self.indices)


def sqdist(A: np.ndarray, B: np.ndarray) -> np.ndarray:
    """Squared distances over the last axis, broadcasting the rest.

    Features are accumulated left to right so every code path (and the numba
    scans) rounds the same way; equal inputs then give bit-equal distances.
    """
    A, B = np.asarray(A, dtype=np.float64), np.asarray(B, dtype=np.float64)
    out = np.zeros(np.broadcast_shapes(A.shape[:-1], B.shape[:-1]))
    for f in range(A.shape[-1]):
        t = A[..., f] - B[..., f]
        out += t * t
    return out


def _rank(cand: np.ndarray, d2: np.ndarray, k: int):
    order = np.lexsort((cand, d2))[:k]
    return cand[order], d2[order]


def knn_brute(X: np.ndarray, q: np.ndarray, k: int, eligible: np.ndarray | None = None):
    """Linear scan. Returns (indices, squared distances) of the k nearest."""
    cand = np.arange(len(X)) if eligible is None else np.flatnonzero(eligible)
    d2 = sqdist(X[cand], q)
    return _rank(cand, d2, k)


def knn(
    frame: Frame,
    query_index: int,
    k: int,
    exclude_self: bool = True,
    class_filter: int | None = None,
) -> NeighborList:
    if k < 1:
        raise ValueError("k must be >= 1")
    eligible = np.ones(len(frame), dtype=bool)
    if class_filter is not None:
        eligible &= frame.y == class_filter
    if exclude_self:
        eligible[query_index] = False
    idx, d2 = knn_brute(frame.X, frame.X[query_index], k, eligible)
    return NeighborList(query_index, idx, np.sqrt(d2), short=len(idx) < k)


def nn1_classify(reference: Frame, query: Instance | np.ndarray) -> int:
    if len(reference) == 0:
        raise ValueError("empty reference set")
    q = np.asarray(query.features if isinstance(query, Instance) else query, dtype=np.float64)
    if q.shape != (reference.p,):
        raise ValueError("query dimension does not match reference")
    idx, _ = knn_brute(reference.X, q, 1)
    return int(reference.y[idx[0]])


class KnnIndex:
    """Batch exact k-NN over a fixed point set.

    ``query_rows`` answers for rows of the indexed set itself with the row
    excluded, which is what every editing rule needs.
    """

    def __init__(self, X: np.ndarray):
        self.X = np.ascontiguousarray(X, dtype=np.float64)
        self.n = len(self.X)
        self._tree = cKDTree(self.X) if self.n > _BRUTE_LIMIT else None

    def query_rows(self, rows: np.ndarray, k: int) -> np.ndarray:
        """Indices of the k nearest other rows for each row in ``rows``.

        Returns an int array of shape (len(rows), min(k, n-1)).
        """
        rows = np.asarray(rows, dtype=np.int64)
        k_eff = min(k, self.n - 1)
        out = np.empty((len(rows), k_eff), dtype=np.int64)
        if k_eff <= 0:
            return out
        if self._tree is None:
            for r, i in enumerate(rows):
                mask = np.ones(self.n, dtype=bool)
                mask[i] = False
                out[r], _ = knn_brute(self.X, self.X[i], k_eff, mask)
            return out
        return self._query_tree(self.X[rows], rows, k_eff, out)

    def query_points(self, Q: np.ndarray, k: int, return_sqdist: bool = False):
        """k nearest indexed rows for arbitrary points (nothing excluded)."""
        Q = np.ascontiguousarray(np.atleast_2d(np.asarray(Q, dtype=np.float64)))
        k_eff = min(k, self.n)
        out = np.empty((len(Q), k_eff), dtype=np.int64)
        if k_eff > 0:
            if self._tree is None:
                for r, q in enumerate(Q):
                    out[r], _ = knn_brute(self.X, q, k_eff)
            else:
                self._query_tree(Q, None, k_eff, out)
        if not return_sqdist:
            return out
        return out, sqdist(self.X[out], Q[:, None, :])

    def _query_tree(self, Q, self_rows, k, out):
        # a few extra candidates (one more for self) so exact re-ranking sees boundary ties
        skip = 0 if self_rows is None else 1
        m = min(k + skip + 4, self.n)
        dist, cand = self._tree.query(Q, k=m)
        dist = dist.reshape(len(Q), m)
        cand = cand.reshape(len(Q), m)
        d2 = sqdist(self.X[cand], Q[:, None, :])
        if self_rows is not None:
            d2[cand == self_rows[:, None]] = np.inf
        order = np.lexsort((cand, d2), axis=-1)[:, :k]
        out[:] = np.take_along_axis(cand, order, axis=1)
        if m < self.n:
            # list may be cut inside a (near-)tie: redo those rows exactly
            kth = dist[:, k + skip - 1]
            for r in np.flatnonzero(dist[:, -1] <= kth * (1 + 1e-9) + 1e-300):
                out[r] = self._exact_around(Q[r], k, None if self_rows is None else self_rows[r])
        return out

    def _exact_around(self, q, k, self_index):
        # candidates inside a slightly inflated k-th radius; re-rank exactly
        need = k + (1 if self_index is not None else 0)
        dist, _ = self._tree.query(q, k=min(need, self.n))
        radius = float(np.atleast_1d(dist)[-1]) * (1 + 1e-9) + 1e-12
        c = np.asarray(self._tree.query_ball_point(q, radius), dtype=np.int64)
        if self_index is not None:
            c = c[c != self_index]
        d2 = sqdist(self.X[c], q)
        return _rank(c, d2, k)[0]
