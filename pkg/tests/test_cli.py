import csv
import hashlib
import json

import numpy as np
import pytest

from spectra.cli import main


def digest(root):
    return {p.relative_to(root).as_posix(): hashlib.sha256(p.read_bytes()).hexdigest() for p in sorted(root.rglob("*")) if p.is_file()}


@pytest.fixture
def planted_logs(tmp_path, fixtures):
    out = tmp_path / "logs"
    assert main(["simulate", "--planted", str(fixtures / "planted_rules.json"), "--n", "2000", "--seed", "7", "--out", str(out)]) == 0
    return out


@pytest.fixture
def traces(tmp_path):
    d = tmp_path / "traces"
    d.mkdir()
    rng = np.random.default_rng(0)
    for i in range(2):
        t = np.arange(0, 400, 2.0)
        np.savetxt(d / f"trace_{i}.txt", np.c_[t, rng.uniform(0.3, 6.0, len(t))], fmt="%.3f")
    return d


def test_simulate_planted_row_counts(planted_logs, capsys):
    files = sorted(p.name for p in planted_logs.iterdir())
    assert files == ["A.csv", "B.csv"]
    for f in files:
        assert len((planted_logs / f).read_text().splitlines()) == 2001


def test_simulate_abr(tmp_path, traces):
    out = tmp_path / "abr"
    assert main(["simulate", "--abr", "bb,rb", "--traces", str(traces), "--chunks", "30", "--out", str(out)]) == 0
    assert sorted(p.name for p in out.iterdir()) == ["bb__trace_0.csv", "bb__trace_1.csv", "rb__trace_0.csv", "rb__trace_1.csv"]
    header = (out / "bb__trace_0.csv").read_text().splitlines()[0]
    assert header == "reference,trace,step,buffer,download_time,bitrate"


def test_simulate_missing_traces(tmp_path, capsys):
    assert main(["simulate", "--abr", "bb", "--traces", str(tmp_path / "nope"), "--out", str(tmp_path / "o")]) == 2
    assert "does not exist" in capsys.readouterr().err


def test_usage_errors(tmp_path, capsys):
    with pytest.raises(SystemExit) as exc:
        main(["mine"])
    assert exc.value.code == 2
    assert main(["simulate", "--out", str(tmp_path)]) == 2


def mine_args(logs, fixtures, out, *extra):
    return ["mine", str(logs), "--schema", str(fixtures / "planted_schema.json"), "--config", str(fixtures / "planted_config.json"), "--out", str(out), *extra]


def test_mine_outputs_and_determinism(planted_logs, fixtures, tmp_path, capsys):
    assert main(mine_args(planted_logs, fixtures, tmp_path / "m1")) == 0
    printed = capsys.readouterr().out
    for word in ("interesting regions", "specifications", "relaxed coverage", "volume", "wall time"):
        assert word in printed
    assert main(mine_args(planted_logs, fixtures, tmp_path / "m2")) == 0
    assert sorted(digest(tmp_path / "m1")) == ["manifest.json", "report.txt", "specs.json"]
    assert digest(tmp_path / "m1") == digest(tmp_path / "m2")


def test_config_precedence(planted_logs, fixtures, tmp_path):
    assert main(mine_args(planted_logs, fixtures, tmp_path / "m", "--tau-rep", "0.05")) == 0
    manifest = json.loads((tmp_path / "m" / "manifest.json").read_text())
    assert manifest["config"]["tau_rep"] == 0.05 and manifest["config"]["parts"] == 20


def test_config_error_exit(planted_logs, fixtures, tmp_path, capsys):
    assert main(mine_args(planted_logs, fixtures, tmp_path / "m", "--tau-max", "4")) == 2
    assert "tau_max" in capsys.readouterr().err


def test_eval(planted_logs, fixtures, tmp_path, capsys):
    main(mine_args(planted_logs, fixtures, tmp_path / "m"))
    capsys.readouterr()
    schema = str(fixtures / "planted_schema.json")
    specs = str(tmp_path / "m" / "specs.json")
    empty = tmp_path / "empty" / "A.csv"
    empty.parent.mkdir()
    empty.write_text("x0,x1,label\n")
    code = main(["eval", str(planted_logs), "--specs", specs, "--schema", schema, "--test", str(empty), "--out", str(tmp_path / "ev")])
    assert code == 0
    out = capsys.readouterr().out
    assert "undefined metric" in out
    train = json.loads((tmp_path / "ev" / "eval_train.json").read_text())
    assert all(r["confidence"] == 1.0 for r in train["references"])
    test = json.loads((tmp_path / "ev" / "eval_test.json").read_text())
    assert test["references"][0]["support"] is None


def test_eval_feature_mismatch(planted_logs, fixtures, tmp_path, capsys):
    main(mine_args(planted_logs, fixtures, tmp_path / "m"))
    other = tmp_path / "other_schema.json"
    other.write_text(json.dumps({"feature_columns": ["x1", "x0"], "output_column": "label", "output": ["a", "b", "c", "d"]}))
    assert main(["eval", str(planted_logs), "--specs", str(tmp_path / "m" / "specs.json"), "--schema", str(other)]) == 2


def test_export_cli(fixtures, tmp_path):
    code = main(["export-vnnlib", "--specs", str(fixtures / "published_abr_specs.json"), "--map", str(fixtures / "abr_model_map.json"), "--out", str(tmp_path / "v")])
    assert code == 0
    assert len(list((tmp_path / "v").glob("spec_*.vnnlib"))) == 30


def test_ablate_rows_and_resume(planted_logs, fixtures, tmp_path, capsys, monkeypatch):
    monkeypatch.setenv("SPECTRA_THREADS", "1")
    grid = tmp_path / "grid.json"
    grid.write_text(json.dumps({"history": [2, 3, 4], "parts": [10, 20]}))
    args = ["ablate", str(planted_logs), "--grid", str(grid), "--schema", str(fixtures / "planted_schema.json"),
            "--config", str(fixtures / "planted_config.json"), "--out", str(tmp_path / "abl.csv"), "--timing"]
    assert main(args) == 0
    rows = list(csv.DictReader((tmp_path / "abl.csv").open()))
    assert len(rows) == 6
    assert [r["key"] for r in rows][:2] == ["history=2;parts=10", "history=2;parts=20"]
    assert (tmp_path / "abl.csv.timing.csv").exists()
    capsys.readouterr()
    assert main(args) == 0
    assert "6 completed rows skipped" in capsys.readouterr().out


def test_ablate_invalid_grid(planted_logs, fixtures, tmp_path):
    grid = tmp_path / "grid.json"
    grid.write_text(json.dumps({"parts": [0]}))
    args = ["ablate", str(planted_logs), "--grid", str(grid), "--schema", str(fixtures / "planted_schema.json"), "--out", str(tmp_path / "a.csv")]
    assert main(args) == 2
    grid.write_text(json.dumps({"colour": [1]}))
    assert main(args) == 2
