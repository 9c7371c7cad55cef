"""numba kernels for brute-force neighbour scans."""

import numpy as np
from numba import njit


@njit(nogil=True, cache=True)
def kth_sqdist(Q, R, k):
    """Squared distance from every row of Q to its k-th nearest row of R."""
    nq, p = Q.shape
    nr = R.shape[0]
    out = np.empty(nq, dtype=np.float64)
    best = np.empty(k, dtype=np.float64)
    for i in range(nq):
        for j in range(k):
            best[j] = np.inf
        for r in range(nr):
            d = 0.0
            for c in range(p):
                t = Q[i, c] - R[r, c]
                d += t * t
                if d >= best[k - 1]:
                    break
            if d < best[k - 1]:
                j = k - 1
                while j > 0 and best[j - 1] > d:
                    best[j] = best[j - 1]
                    j -= 1
                best[j] = d
        out[i] = best[k - 1]
    return out


@njit(nogil=True, cache=True)
def cnn_scan(X, y, store, candidates, repeat, best, best_i, scanned):
    """Hart's condensing of ``candidates`` (all one class) onto ``store``.

    Candidates are visited in the given order; one misclassified by the 1-NN
    rule over the current store joins it. With ``repeat`` the scan restarts
    until a full pass adds nothing. Ties go to the lower row index. Since the
    store only grows, each candidate remembers its nearest store member and
    how much of the store it has already scanned; ``best``, ``best_i`` and
    ``scanned`` carry that state in (updated in place).
    Returns a boolean membership mask over rows.
    """
    n, p = X.shape
    in_store = np.zeros(n, dtype=np.bool_)
    members = np.empty(n, dtype=np.int64)
    m = 0
    for s in store:
        in_store[s] = True
        members[m] = s
        m += 1
    nc = candidates.shape[0]
    while True:
        added = 0
        for ci in range(nc):
            x = candidates[ci]
            if in_store[x]:
                continue
            b = best[ci]
            bi = best_i[ci]
            for j in range(scanned[ci], m):
                s = members[j]
                d = 0.0
                for c in range(p):
                    t = X[x, c] - X[s, c]
                    d += t * t
                    if d > b:
                        break
                if d < b or (d == b and s < bi):
                    b = d
                    bi = s
            best[ci] = b
            best_i[ci] = bi
            scanned[ci] = m
            if y[bi] != y[x]:
                in_store[x] = True
                members[m] = x
                m += 1
                added += 1
        if not repeat or added == 0:
            break
    return in_store
