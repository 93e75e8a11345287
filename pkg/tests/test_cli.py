"""CLI tests: exit codes, JSON error payloads, artifacts."""

import json

import pytest

from pseudocount.harness.cli import EXIT_SPEC, main
from pseudocount.harness.spec import ExperimentSpec


def write_spec(path, **kw):
    base = dict(name="cli", env={"kind": "chain", "length": 5, "cap": 15}, model={"kind": "empirical"},
                agent={"update": "mmc", "epsilon_steps": 50}, seeds=[0], budget=200)
    base.update(kw)
    ExperimentSpec(**base).save(path)
    return path


def test_run_succeeds_and_writes_figure(tmp_path, capsys):
    spec = write_spec(tmp_path / "s.json")
    assert main(["run", str(spec), "--out", str(tmp_path / "out")]) == 0
    out = json.loads(capsys.readouterr().out)
    assert out["seeds"]["0"]["status"] == "complete"
    assert (tmp_path / "out" / "returns.png").exists()


def test_invalid_spec_exits_nonzero_with_json(tmp_path, capsys):
    path = tmp_path / "bad.json"
    path.write_text(json.dumps({"name": "bad", "seeds": [], "budget": -1}))
    assert main(["run", str(path)]) == EXIT_SPEC
    err = json.loads(capsys.readouterr().err)
    assert err["type"] == "SpecError"
    assert any(p.startswith("seeds") for p in err["problems"])
    assert any(p.startswith("budget") for p in err["problems"])


def test_malformed_json_exits_nonzero(tmp_path, capsys):
    path = tmp_path / "bad.json"
    path.write_text("{not json")
    assert main(["run", str(path)]) == EXIT_SPEC
    assert "invalid JSON" in json.loads(capsys.readouterr().err)["error"]


def test_missing_spec_file(tmp_path, capsys):
    assert main(["run", str(tmp_path / "missing.json")]) != 0
    assert json.loads(capsys.readouterr().err)["type"] == "FileNotFoundError"


def test_report_between_runs(tmp_path, capsys):
    a = write_spec(tmp_path / "a.json", name="a")
    b = write_spec(tmp_path / "b.json", name="b", model={"kind": "none"})
    assert main(["run", str(a), "--out", str(tmp_path / "ra"), "--no-plots"]) == 0
    assert main(["run", str(b), "--out", str(tmp_path / "rb"), "--no-plots"]) == 0
    capsys.readouterr()
    assert main(["report", str(tmp_path / "rb"), str(tmp_path / "ra"), "--out", str(tmp_path / "r.json")]) == 0
    printed = json.loads(capsys.readouterr().out)
    saved = json.loads((tmp_path / "r.json").read_text())
    assert printed == saved and "percent" in saved


def test_sweep_rejects_wrong_kind(tmp_path, capsys):
    spec = write_spec(tmp_path / "s.json")
    assert main(["sweep-lr", str(spec)]) == EXIT_SPEC
    assert "lr_sweep" in json.loads(capsys.readouterr().err)["problems"][0]


def test_compare_pg(tmp_path, capsys):
    path = tmp_path / "pg.json"
    ExperimentSpec(name="pg", kind="pg_comparison", budget=40, seeds=[0],
                   stream={"height": 5, "width": 5, "bins": 2, "n_generators": 2, "period": 10},
                   models=[{"kind": "cts", "label": "cts"}]).save(path)
    assert main(["compare-pg", str(path), "--out", str(tmp_path / "o")]) == 0
    assert "cts" in json.loads(capsys.readouterr().out)["stats"]
    assert (tmp_path / "o" / "pg.png").exists()


def test_preset_with_overrides(tmp_path, capsys):
    args = ["preset", "intrinsic-only", "budget=150", "seeds=[0]", "--out", str(tmp_path), "--no-plots"]
    assert main(args) == 0
    out = json.loads(capsys.readouterr().out)
    assert set(out) == {"intrinsic_only", "intrinsic_only_baseline"}
    assert (tmp_path / "intrinsic_only" / "seed_0" / "steps.csv").exists()


def test_preset_bad_override(tmp_path, capsys):
    assert main(["preset", "intrinsic-only", "budget=-3", "--out", str(tmp_path)]) == EXIT_SPEC
    assert "budget" in json.loads(capsys.readouterr().err)["problems"][0]


def test_unknown_command_exits_nonzero():
    with pytest.raises(SystemExit) as exc:
        main(["fly"])
    assert exc.value.code != 0
