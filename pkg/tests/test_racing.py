import csv
import warnings

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import stats

from oracles import friedman_chi2
from pwidb import racing
from pwidb.core import Frame, SeedPolicy
from pwidb.forest import ForestParams
from pwidb.ingest import SynthConfig, gen_synthetic
from pwidb.racing import RaceConfig, friedman_statistic, make_folds, paired_pvalue, race
from pwidb.resampling import BalancerSpec, default_candidates

NINE = tuple(default_candidates())


def labeled(n_min, n_maj, p=2, seed=0):
    rng = np.random.default_rng(seed)
    return Frame(rng.normal(size=(n_min + n_maj, p)), np.r_[np.ones(n_min, np.int8), np.zeros(n_maj, np.int8)])


def injected(means, sigma, seed):
    """Evaluator drawing score ~ N(mean_c, sigma) per (candidate, fold)."""

    def ev(c, spec, f):
        return float(SeedPolicy(seed).rng(f"c{c}", f).normal(means[c], sigma))

    return ev


# -- folds ------------------------------------------------------------------


def test_folds_are_stratified_partition():
    f = labeled(100, 900)
    folds = make_folds(f, 10, 1)
    assert all((v.val.n_min, v.val.n_maj) == (10, 90) for v in folds)
    ids = np.concatenate([v.val.ids for v in folds])
    assert sorted(ids.tolist()) == sorted(f.ids.tolist())
    for v in folds:
        assert not set(v.fit.ids.tolist()) & set(v.val.ids.tolist())


def test_small_folds():
    folds = make_folds(labeled(2, 2), 2, 0)
    assert [(v.val.n_min, v.val.n_maj) for v in folds] == [(1, 1), (1, 1)]
    with pytest.warns(UserWarning):
        assert len(make_folds(labeled(3, 30), 10, 0)) == 3


# -- statistics --------------------------------------------------------------


def test_friedman_identical_rankings():
    block = [[1, 2, 3]] * 5
    stat, p = friedman_statistic(block)
    assert stat == pytest.approx(10.0) and p < 0.01
    assert friedman_statistic(np.ones((4, 3))) == (0.0, 1.0)


@given(st.integers(2, 8), st.integers(2, 6), st.integers(0, 10**6))
def test_friedman_matches_rank_sum_oracle(n, k, seed):
    block = np.random.default_rng(seed).integers(0, 4, size=(n, k)).astype(float)
    stat, p = friedman_statistic(block)
    if np.all(block == block[:, :1]):
        assert (stat, p) == (0.0, 1.0)
    else:
        assert stat == pytest.approx(max(friedman_chi2(block.tolist()), 0.0), abs=1e-9)
        assert p == pytest.approx(stats.chi2.sf(stat, k - 1))


def test_friedman_calibration():
    rng = np.random.default_rng(0)
    rej = sum(friedman_statistic(rng.normal(size=(10, 5)))[1] < 0.05 for _ in range(1000))
    assert 30 <= rej <= 80


def test_paired_pvalue():
    assert paired_pvalue([2, 3, 4], [1, 2, 3]) == 0.0
    assert paired_pvalue([1, 2, 3], [2, 3, 4]) == 1.0
    a, b = [0.9, 0.8, 0.95, 0.85], [0.7, 0.75, 0.72, 0.71]
    assert paired_pvalue(a, b) < 0.05 and paired_pvalue(a, b, "wilcoxon") < 0.1


# -- config -------------------------------------------------------------------


def test_config_validation():
    with pytest.raises(ValueError):
        RaceConfig(candidates=(BalancerSpec("RUS"), BalancerSpec("RUS")))
    with pytest.raises(ValueError):
        RaceConfig(max_exp=8)
    with pytest.raises(ValueError):
        RaceConfig(alpha=1.0)
    with pytest.raises(ValueError):
        RaceConfig(metric="accuracy")
    assert RaceConfig().budget == 90


# -- race with injected scores ------------------------------------------------


def test_single_candidate_wins_after_one_fold():
    cfg = RaceConfig(candidates=(BalancerSpec("SMOTE"),))
    out = race(None, cfg, evaluator=lambda c, s, f: 0.5)
    assert out.winner.technique == "SMOTE" and out.folds_completed == 1 and out.trace == []


def test_dominant_candidate():
    means = [0.70] * 9
    means[4] = 0.95
    wins = early = 0
    for seed in range(100):
        out = race(None, RaceConfig(candidates=NINE), injected(means, 0.01, seed))
        wins += out.winner_index == 4
        early += sum(e.fold < 10 for e in out.trace) >= 4
    assert wins >= 95 and early >= 95


def test_failed_candidate_is_dropped():
    def ev(c, spec, f):
        return float("nan") if c == 0 else 0.5 + 0.1 * c

    out = race(None, RaceConfig(candidates=NINE[:3]), ev)
    assert out.status[0] == "failed" and out.winner_index != 0
    with pytest.raises(racing.RaceError):
        race(None, RaceConfig(candidates=NINE[:2]), lambda c, s, f: float("nan"))


@given(
    k=st.integers(1, 9),
    folds=st.integers(1, 12),
    extra=st.integers(0, 60),
    seed=st.integers(0, 10**6),
    sigma=st.sampled_from([0.0, 0.01, 0.2]),
)
def test_race_invariants(k, folds, extra, seed, sigma):
    rng = np.random.default_rng(seed)
    means = rng.uniform(0.5, 0.9, size=k)
    cfg = RaceConfig(candidates=NINE[:k], folds=folds, max_exp=k + extra)
    calls = []

    def ev(c, spec, f):
        calls.append((c, f))
        return float(SeedPolicy(seed).rng(f"c{c}", f).normal(means[c], sigma)) if sigma else float(means[c])

    out = race(None, cfg, ev)
    assert out.evaluations == len(calls) <= cfg.budget
    assert out.status[out.winner_index] == "alive"
    # eliminated rows end at their elimination fold and never come back
    for e in out.trace:
        assert np.isnan(out.scores[e.candidate, e.fold :]).all()
    alive = [c for c in range(k) if out.status[c] == "alive"]
    m = out.mean_scores()
    assert out.winner_index == alive[int(np.argmax(m[alive]))]
    # affine transform of all scores keeps the winner
    out2 = race(None, cfg, lambda c, s, f: 3.0 * ev(c, s, f) + 1.0)
    assert out2.winner_index == out.winner_index


def test_thread_count_does_not_matter():
    means = np.linspace(0.6, 0.8, 9)
    a = race(None, RaceConfig(candidates=NINE), injected(means, 0.05, 3))
    b = race(None, RaceConfig(candidates=NINE, threads=4), injected(means, 0.05, 3))
    assert np.array_equal(a.scores, b.scores, equal_nan=True) and a.trace == b.trace


def test_trace_csv(tmp_path):
    means = [0.7] * 5 + [0.9]
    out = race(None, RaceConfig(candidates=NINE[:6]), injected(means, 0.01, 0))
    path = tmp_path / "trace.csv"
    out.write_trace(path)
    rows = list(csv.DictReader(open(path)))
    assert list(rows[0]) == ["fold", "candidate", "score", "status", "p_value"]
    elim = [r for r in rows if r["status"] == "eliminated"]
    assert len(elim) == len(out.trace) and all(float(r["p_value"]) < 0.05 for r in elim)


# -- race on data -------------------------------------------------------------


def test_evaluate_candidate_separable():
    f = labeled(30, 60, p=2)
    X = f.X.copy()
    X[f.y == 1, 0] += 100
    g = Frame(X, f.y)
    fold = make_folds(g, 3, 0)[0]
    for spec in (BalancerSpec("Unbal"), BalancerSpec("SMOTE"), BalancerSpec("ENN")):
        assert racing.evaluate_candidate(spec, fold, "AUC", ForestParams(ntree=5)) == 1.0


def test_smote_helps_on_imbalanced_stream():
    f = gen_synthetic(SynthConfig(n=20000, ir=100, overlap=2.0, seed=0))
    folds = make_folds(f, 10, 0)
    params = ForestParams(ntree=25)
    diff = [
        racing.evaluate_candidate(BalancerSpec("SMOTE"), v, "AUC", params, i)
        - racing.evaluate_candidate(BalancerSpec("Unbal"), v, "AUC", params, i)
        for i, v in enumerate(folds)
    ]
    assert np.median(diff) >= 0


def test_race_on_data_is_deterministic():
    f = gen_synthetic(SynthConfig(n=1500, ir=10, overlap=1.0, seed=1))
    cfg = RaceConfig(folds=4, forest=ForestParams(ntree=8), seed=5)
    out = race(f, cfg)
    again = race(f, cfg)
    assert out.winner == again.winner
    assert np.array_equal(out.scores, again.scores, equal_nan=True)
    assert out.evaluations <= cfg.budget
    with pytest.raises(racing.RaceError):
        race(labeled(0, 10), cfg)
