import numpy as np
import pytest

import pwidb.streaming as S
from pwidb import forest, racing, resampling
from pwidb.core import Frame, split_train_test
from pwidb.forest import ForestParams
from pwidb.ingest import SynthConfig, gen_synthetic
from pwidb.racing import RaceConfig
from pwidb.resampling import BalancerSpec
from replay import ECC_WINDOW_SIZES, ecc_shaped_stream, replay_ecc_windows, stub_frame

FAST_FOREST = ForestParams(ntree=10)
FAST_RACE = RaceConfig(
    candidates=tuple(BalancerSpec(t) for t in ("Unbal", "RUS", "ROS", "SMOTE", "ENN")),
    folds=3,
    forest=ForestParams(ntree=5),
)


@pytest.fixture(scope="module")
def stream():
    data = gen_synthetic(SynthConfig(n=6000, ir=50, overlap=1.5, seed=3))
    return S.cut_chunks(data, S.plan_chunks(len(data), "equal", 4))


# -- plans ------------------------------------------------------------------


def test_paper_plan():
    plan = S.plan_chunks(284807, "paper_ecc")
    assert plan.cumulative() == [50000, 100000, 140000, 180000, 200000, 220000, 250000, 284807]
    assert plan.train_sizes() == [45000, 45000, 36000, 36000, 18000, 18000, 27000, 31326]
    assert not plan.truncated


def test_equal_and_truncated_plans():
    assert S.plan_chunks(100, "equal", 4).sizes == (25, 25, 25, 25)
    assert S.plan_chunks(10, "equal", 3).sizes == (4, 3, 3)
    short = S.plan_chunks(120000, "paper_ecc")
    assert short.truncated and short.sizes == (50000, 50000, 20000)
    with pytest.raises(ValueError):
        S.plan_chunks(5, "paper_ecc")
    with pytest.raises(ValueError):
        S.cut_chunks(Frame.empty(2), S.plan_chunks(100, "equal", 2))


# -- window bookkeeping -------------------------------------------------------


def test_accumulative_paper_sizes():
    data = ecc_shaped_stream()
    chunks = S.cut_chunks(data, S.plan_chunks(len(data), "paper_ecc"))
    wm = S.WindowManager("accumulative")
    sizes, minority, expected_min = [], [], 0
    for j, c in enumerate(chunks, 1):
        sp = split_train_test(c, 0.9, j)
        st = wm.open(sp.train, sp.test)
        wm.close(stub_frame(1, 1))
        expected_min += sp.train.n_min
        sizes.append(len(st.train_window))
        minority.append((st.train_window.n_min, expected_min))
    assert sizes == [45000, 90000, 126000, 162000, 180000, 198000, 225000, 256326]
    assert all(a == b for a, b in minority)


def test_ecc_window_replay():
    res = replay_ecc_windows()
    sizes = [r.size for r in res.rows]
    assert [s for i, s in enumerate(sizes) if i != 6] == [s for i, s in enumerate(ECC_WINDOW_SIZES) if i != 6]
    assert sizes[6] == 337754 and abs(sizes[6] - ECC_WINDOW_SIZES[6]) <= 200
    h = res.hypotheses[0]
    assert (h.technique, h.carried_size, h.metric, round(h.post_IR, 1)) == ("SMOTE", 1575, "AUC", 1.9)
    for j in range(1, 8):
        assert res.rows[j].size == res.hypotheses[j - 1].carried_size + S.plan_chunks(284807).train_sizes()[j]


# -- protocols on data --------------------------------------------------------


def test_batch_separable_toy():
    rng = np.random.default_rng(0)
    X = rng.normal(size=(100, 2))
    y = (np.arange(100) < 20).astype(np.int8)
    X[y == 1] += 20
    res = S.run_batch(Frame(X, y), None, FAST_FOREST)
    assert len(res.rows) == 1 and res.rows[0].AUC == 1.0 and res.rows[0].technique == "Unbal"


def test_single_chunk_accumulative_is_batch(stream):
    a = S.run_accumulative(stream[:1], None, FAST_FOREST, seed=4)
    b = S.run_batch(stream[0], None, FAST_FOREST, seed=4)
    assert a.rows == b.rows


def test_unbal_only_race_makes_pwidb_accumulative(stream):
    cfg = RaceConfig(candidates=(BalancerSpec("Unbal"),), forest=ForestParams(ntree=3))
    a = S.run_accumulative(stream, cfg, FAST_FOREST, seed=1)
    p = S.run_pwidb(stream, cfg, FAST_FOREST, seed=1)
    assert a.rows == p.rows
    for h, r in zip(p.hypotheses, p.rows):
        assert h.post_IR == h.pre_IR == r.train_IR


def test_pwidb_recurrence_and_records(stream):
    res = S.run_pwidb(stream, FAST_RACE, FAST_FOREST, seed=2)
    train_parts = [sp.train for sp in S.Pwidb(FAST_RACE, seed=2).splits(stream, 0.9)]
    assert res.rows[0].size == len(train_parts[0])
    for j in range(1, len(stream)):
        assert res.rows[j].size == res.hypotheses[j - 1].carried_size + len(train_parts[j])
    for r, h in zip(res.rows, res.hypotheses):
        assert h.carried_size == r.bal_minority + r.bal_majority
        assert h.technique == r.technique and h.classifier == "RF(ntree=10)"
    tests = [r.test_minority + r.test_majority for r in res.rows]
    assert tests == list(np.cumsum([len(c) - len(t) for c, t in zip(stream, train_parts)]))


def test_pwidb_needs_race(stream):
    with pytest.raises(ValueError):
        S.run_pwidb(stream, None)


def test_test_rows_never_train(stream, monkeypatch):
    seen = []
    real_fit, real_apply = forest.fit, resampling.apply

    def fit(train, params=ForestParams()):
        seen.append(train.ids.copy())
        return real_fit(train, params)

    def apply(spec, frame, seed=0):
        seen.append(frame.ids.copy())
        return real_apply(spec, frame, seed)

    monkeypatch.setattr(forest, "fit", fit)
    monkeypatch.setattr(racing, "apply", apply)
    monkeypatch.setattr(S, "apply", apply)
    S.run_pwidb(stream, FAST_RACE, FAST_FOREST, seed=6)
    test_ids = set()
    for sp in S.Pwidb(FAST_RACE, seed=6).splits(stream, 0.9):
        test_ids |= set(sp.test.ids.tolist())
    assert seen and all(not (set(s.tolist()) & test_ids) for s in seen)


def test_deterministic(stream):
    a = S.run_pwidb(stream, FAST_RACE, FAST_FOREST, seed=8)
    b = S.run_pwidb(stream, FAST_RACE, FAST_FOREST, seed=8)
    assert a.rows == b.rows and a.hypotheses == b.hypotheses


def test_carry_threshold(stream):
    never = S.run_pwidb(stream, FAST_RACE, FAST_FOREST, seed=2, carry_policy="improve_threshold:10")
    acc = S.run_accumulative(stream, FAST_RACE, FAST_FOREST, seed=2)
    assert [r.size for r in never.rows] == [r.size for r in acc.rows]
    with pytest.raises(ValueError):
        S.Pwidb(FAST_RACE, carry_policy="sometimes")


def test_halt_and_resume(stream, tmp_path, monkeypatch):
    full = S.run_pwidb(stream, FAST_RACE, FAST_FOREST, seed=5)
    real = racing.race
    calls = {"n": 0}

    def flaky(train, config, evaluator=None):
        calls["n"] += 1
        if calls["n"] == 3:
            raise racing.RaceError("injected")
        return real(train, config, evaluator)

    monkeypatch.setattr(racing, "race", flaky)
    with pytest.raises(S.ProtocolHalted) as exc:
        S.run_pwidb(stream, FAST_RACE, FAST_FOREST, seed=5, checkpoint_dir=tmp_path)
    assert exc.value.checkpoint.exists()
    resumed = S.run_pwidb(stream, FAST_RACE, FAST_FOREST, seed=5, resume=exc.value.checkpoint)
    assert resumed.rows == full.rows and resumed.hypotheses == full.hypotheses


def test_emit_hypothesis_unbal():
    f = stub_frame(5, 50)
    st = S.WindowState(1, f, f, f, f)
    h = S.emit_hypothesis(st, BalancerSpec("Unbal"), f, "AUC", FAST_FOREST)
    assert h.post_IR == h.pre_IR == 10.0 and h.carried_size == 55


def test_batch_race_not_worse_than_unbal():
    data = gen_synthetic(SynthConfig(n=20000, ir=100, overlap=2.0, seed=0))
    params = ForestParams(ntree=50)
    cfg = RaceConfig(folds=5, forest=ForestParams(ntree=15))
    raced = S.run_batch(data, cfg, params, seed=0).rows[0]
    plain = S.run_batch(data, None, params, seed=0).rows[0]
    assert raced.AUC >= plain.AUC - 0.01
