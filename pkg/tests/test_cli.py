"""Command line exit codes and output shapes."""
import json

import yaml

from triadsim.cli import main

GOOD = {
    "version": 1,
    "name": "cli-demo",
    "seed": 5,
    "horizon": "5s",
    "nodes": [{"id": 1}, {"id": 2}],
    "links": {"node_ta": {"base_delay": "300us"},
              "node_node": {"base_delay": "300us"}},
}


def write_yaml(tmp_path, doc, name="sc.yaml"):
    path = tmp_path / name
    path.write_text(yaml.safe_dump(doc))
    return str(path)


def test_list_builtins(capsys):
    assert main(["list-builtins"]) == 0
    out = capsys.readouterr().out
    for name in ("fault_free_triad_like", "f_minus_switch", "tsc_scale_detect"):
        assert name in out


def test_validate_accepts_good_file(tmp_path, capsys):
    path = write_yaml(tmp_path, GOOD)
    assert main(["validate", path]) == 0
    assert "ok" in capsys.readouterr().out


def test_validate_reports_field_paths(tmp_path, capsys):
    doc = dict(GOOD, nodes=[{"id": 1}, {"id": 1}],
               correlated_aex_probability=3.0)
    path = write_yaml(tmp_path, doc)
    assert main(["validate", path]) == 2
    err = capsys.readouterr().err
    assert "error: nodes[1].id" in err
    assert "error: correlated_aex_probability" in err


def test_validate_unparseable_file(tmp_path, capsys):
    path = write_yaml(tmp_path, {"version": 99})
    assert main(["validate", path]) == 2
    assert "error:" in capsys.readouterr().err


def test_run_prints_summary_and_exports(tmp_path, capsys):
    path = write_yaml(tmp_path, GOOD)
    out_dir = tmp_path / "trace"
    assert main(["run", path, "--out", str(out_dir)]) == 0
    stdout = capsys.readouterr().out
    payload = json.loads(stdout[stdout.index("{"):])
    assert payload["scenario"] == "cli-demo"
    assert set(payload["per_node"]) == {"1", "2"}
    assert (out_dir / "drift.csv").exists()


def test_run_accepts_overrides(tmp_path, capsys):
    path = write_yaml(tmp_path, GOOD)
    assert main(["run", path, "--seed", "123", "--horizon", "2s"]) == 0
    payload = json.loads(capsys.readouterr().out)
    assert payload["seed"] == 123
    assert payload["horizon_ns"] == 2_000_000_000


def test_run_builtin_by_name(capsys):
    assert main(["run", "fastest_clock", "--horizon", "30s"]) == 0
    payload = json.loads(capsys.readouterr().out)
    assert payload["scenario"] == "fastest_clock"


def test_run_unknown_scenario(capsys):
    assert main(["run", "no_such_scenario"]) == 2
    assert "error:" in capsys.readouterr().err


def test_summarize_roundtrip(tmp_path, capsys):
    path = write_yaml(tmp_path, GOOD)
    out_dir = tmp_path / "trace"
    main(["run", path, "--out", str(out_dir)])
    capsys.readouterr()
    assert main(["summarize", str(out_dir)]) == 0
    payload = json.loads(capsys.readouterr().out)
    assert payload["scenario"] == "cli-demo"


def test_summarize_missing_directory(tmp_path, capsys):
    assert main(["summarize", str(tmp_path / "nope")]) == 2
    assert "error:" in capsys.readouterr().err
