import json

import numpy as np
import pytest

from pwidb import cli
from pwidb.ingest import load_csv

FAST = ["--set", "race_ntree=3", "--set", "ntree=5", "--set", "folds=2", "--set", "candidates=Unbal,RUS,SMOTE"]


def run(*argv):
    return cli.main([str(a) for a in argv])


def test_gen(tmp_path):
    out = tmp_path / "s.csv"
    assert run("gen", out, "--n", 40000, "--ir", 100, "--seed", 3) == 0
    f = load_csv(out)
    assert abs(f.n_maj / f.n_min - 100) < 2
    again = tmp_path / "t.csv"
    run("gen", again, "--n", 40000, "--ir", 100, "--seed", 3)
    assert out.read_bytes() == again.read_bytes()
    empty = tmp_path / "e.csv"
    assert run("gen", empty, "--n", 0, "--p", 30) == 0
    assert empty.read_text().strip() == "Time," + ",".join(f"V{i}" for i in range(1, 29)) + ",Amount,Class"


def test_batch_unbal_toy(tmp_path):
    data = tmp_path / "toy.csv"
    run("gen", data, "--n", 100, "--ir", 4, "--overlap", 0)
    out = tmp_path / "o"
    assert run("run", "--csv", data, "--protocol", "batch", "--set", "race=false", "--output-dir", out) == 0
    lines = (out / "report.csv").read_text().splitlines()
    assert len(lines) == 2
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["seed"] == 0 and len(manifest["config_sha256"]) == 64


def test_run_outputs_and_repeatability(tmp_path, monkeypatch):
    cfg = tmp_path / "c.yaml"
    cfg.write_text("synth_n: 3000\nsynth_ir: 30\nchunks: 3\nprotocol: pwidb\nseed: 4\n")
    monkeypatch.setenv(cli.OUTPUT_ENV, str(tmp_path / "env_out"))
    assert run("run", cfg, *FAST) == 0
    out = tmp_path / "env_out"
    names = {p.name for p in out.iterdir()}
    assert {"report.csv", "report.hypotheses.csv", "summary.csv", "plot.csv", "manifest.json"} <= names
    assert {"race_window1.csv", "race_window2.csv", "race_window3.csv"} <= names
    assert (out / "plot.csv").read_text().startswith("x,series,value\n")
    assert run("run", cfg, *FAST, "--output-dir", tmp_path / "again", "--threads", 2) == 0
    assert (out / "report.csv").read_bytes() == (tmp_path / "again" / "report.csv").read_bytes()
    m1 = json.loads((out / "manifest.json").read_text())
    m2 = json.loads((tmp_path / "again" / "manifest.json").read_text())
    assert m1["config_sha256"] == m2["config_sha256"]


@pytest.mark.parametrize(
    "text,field",
    [
        ("protocol: online\n", "protocol"),
        ("protocol: pwidb\nrace: false\n", "race"),
        ("folds: many\n", "folds"),
        ("candidates: [SMOTE, MAGIC]\n", "candidates"),
        ("colour: blue\n", "colour"),
        ("alpha: 2\n", "alpha"),
        ("- a\n- b\n", "mapping"),
    ],
)
def test_config_errors(tmp_path, capsys, text, field):
    cfg = tmp_path / "c.yaml"
    cfg.write_text(text)
    assert run("run", cfg, "--output-dir", tmp_path / "o") == cli.EXIT_CONFIG
    assert field in capsys.readouterr().err


def test_mid_run_failure_checkpoints(tmp_path, monkeypatch, capsys):
    from pwidb import racing

    def broken(*a, **k):
        raise racing.RaceError("boom")

    monkeypatch.setattr(racing, "race", broken)
    rc = run("run", "--set", "synth_n=2000", "--set", "chunks=2", *FAST, "--output-dir", tmp_path / "o")
    assert rc == cli.EXIT_HALTED
    assert (tmp_path / "o" / "checkpoint" / "checkpoint.npz").exists()
    assert "boom" in capsys.readouterr().err


def test_compare(tmp_path, capsys):
    base = ["--set", "synth_n=3000", "--set", "synth_ir=30", "--set", "chunks=3", *FAST]
    run("run", *base, "--protocol", "accumulative", "--set", "race=false", "--output-dir", tmp_path / "acc")
    run("run", *base, "--protocol", "pwidb", "--output-dir", tmp_path / "inc")
    grid = cli.compare_reports([tmp_path / "acc" / "report.csv", tmp_path / "inc" / "report.csv"], metrics=("AUC",))
    assert grid[0] == ["window", "acc_AUC", "inc_AUC", "delta_inc_AUC"]
    assert [r[0] for r in grid[1:]] == ["1", "2", "3", "average"]
    avg = grid[-1]
    assert float(avg[3]) == pytest.approx(float(avg[2]) - float(avg[1]), abs=1e-4)
    same = cli.compare_reports([tmp_path / "acc" / "report.csv"] * 2)
    assert all(float(v) == 0 for r in same[1:] for v in (r[3], r[6]))
    out = tmp_path / "cmp.csv"
    assert run("compare", tmp_path / "acc" / "report.csv", tmp_path / "inc" / "report.csv", "-o", out) == 0
    assert out.read_text().splitlines()[0].startswith("window,")


def test_compare_rejects_mismatched_plans(tmp_path, capsys):
    base = [*FAST, "--set", "race=false", "--protocol", "accumulative", "--set", "synth_n=3000"]
    run("run", *base, "--set", "chunks=3", "--output-dir", tmp_path / "a")
    run("run", *base, "--set", "chunks=2", "--output-dir", tmp_path / "b")
    assert run("compare", tmp_path / "a" / "report.csv", tmp_path / "b" / "report.csv") == cli.EXIT_CONFIG
    assert "window plan" in capsys.readouterr().err


def test_run_config_defaults_validate():
    cli.RunConfig().validate()
    rc = cli.RunConfig(race=True).race_config()
    assert len(rc.candidates) == 9 and np.isclose(rc.alpha, 0.05)
