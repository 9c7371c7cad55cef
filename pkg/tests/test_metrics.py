import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from oracles import auc_pairs, f1_counts
from pwidb.metrics import UndefinedMetricError, auc, confusion, evaluate, f1, score


def test_auc_basics():
    assert auc([0.9, 0.8, 0.1, 0.2], [1, 1, 0, 0]) == 1.0
    assert auc([0.3] * 6, [1, 0, 1, 0, 0, 0]) == 0.5
    with pytest.raises(UndefinedMetricError, match="AUC undefined"):
        auc([0.1, 0.2], [1, 1])


def test_f1_hand_counts():
    labels = [1] * 10 + [0] * 10
    pred = [1] * 9 + [0] + [1] + [0] * 9
    assert confusion(pred, labels) == (9, 1, 9, 1)
    assert f1(pred, labels) == pytest.approx(0.9)
    assert f1(labels, labels) == 1.0
    assert f1([0] * 20, labels) == 0.0


def test_evaluation_consistency():
    ev = evaluate([0.9, 0.6, 0.4, 0.1, 0.5], [1, 0, 1, 0, 0])
    assert ev.tp + ev.fn == ev.n_pos and ev.fp + ev.tn == ev.n_neg
    P, R = ev.precision, ev.recall
    assert ev.f1 == pytest.approx(2 * P * R / (P + R))
    assert ev.get("auc") == ev.auc
    assert score("auc", [0.9, 0.1], [1, 0]) == 1.0


def test_auc_matches_pair_count_200():
    rng = np.random.default_rng(0)
    for _ in range(200):
        n = int(rng.integers(2, 501))
        s = np.round(rng.random(n), int(rng.integers(1, 4)))
        y = (rng.random(n) < rng.uniform(0.05, 0.95)).astype(int)
        y[0], y[1] = 1, 0
        assert abs(auc(s, y) - auc_pairs(s, y)) <= 1e-12


scores_labels = st.integers(2, 60).flatmap(
    lambda n: st.tuples(
        st.lists(st.integers(0, 9), min_size=n, max_size=n),
        st.lists(st.integers(0, 1), min_size=n, max_size=n).filter(lambda l: 0 < sum(l) < len(l)),
    )
)


@given(scores_labels)
def test_auc_rank_invariants(sl):
    s, y = np.array(sl[0], float), np.array(sl[1])
    a = auc(s, y)
    assert auc(np.exp(s) * 3 + 1, y) == pytest.approx(a, abs=1e-12)
    assert auc(s, 1 - y) == pytest.approx(1 - a, abs=1e-12)


@given(scores_labels, st.randoms())
def test_f1_permutation_invariant(sl, r):
    pred = [int(v >= 5) for v in sl[0]]
    y = list(sl[1])
    order = list(range(len(y)))
    r.shuffle(order)
    assert f1([pred[i] for i in order], [y[i] for i in order]) == f1(pred, y) == pytest.approx(f1_counts(pred, y))
