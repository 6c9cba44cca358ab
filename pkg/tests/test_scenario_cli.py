import json
import shutil
import subprocess
from pathlib import Path

import numpy as np
import pytest

from ricci_forge import expr as ex
from ricci_forge.cli import main
from ricci_forge.scenario import Scenario, ScenarioError, build_family, family_to_json, load
from ricci_forge.solutions import FAMILY_CATALOG

from draws import FAMILY_CASES, draw_family

SCENARIOS = Path(__file__).resolve().parent.parent / "scenarios"


def _curvature(**extra):
    doc = {"version": 1, "task": "curvature", "seed": 1,
           "chart": {"kind": "half-space", "n": 4, "p1": 2},
           "metric": {"kind": "hyperbolic"}, "params": {"samples": 5}}
    doc.update(extra)
    return doc


def _write(tmp_path, doc, name="s.json"):
    p = tmp_path / name
    p.write_text(json.dumps(doc))
    return str(p)


def test_round_trip():
    doc = _curvature(metric={"kind": "conformal", "scale": {"op": "exp", "arg": {"op": "coord", "index": 3}}},
                     split={"graph": [[0.1, 0.0], [0.0, 0.2]]}, tolerance=1e-7, name="rt")
    doc["chart"] = {"kind": "box", "n": 4, "p1": 2}
    sc = Scenario.from_json(doc)
    assert sc.to_json() == doc
    assert Scenario.loads(sc.dumps()) == sc


@pytest.mark.parametrize("tag, case", FAMILY_CASES)
def test_family_round_trip(tag, case, rng):
    fam = draw_family(rng, tag, case)
    doc = family_to_json(fam)
    back = build_family(json.loads(json.dumps(doc)))
    assert family_to_json(back) == doc
    sc = Scenario.from_json({"version": 1, "task": "verify-solution", "family": doc})
    x = rng.uniform(-0.5, 0.5, (4, fam.n))
    a, b = fam.build().varphi, back.build().varphi
    assert np.allclose(a(x), b(x))


@pytest.mark.parametrize("patch, pointer", [
    ({"task": "curve"}, "/task"),
    ({"chart": {"kind": "box", "n": 1, "p1": 1}}, "/chart/n"),
    ({"metric": {"kind": "conformal", "scale": {"op": "sine", "arg": 1}}}, "/metric/scale"),
    ({"metric": {"kind": "conformal", "scale": {"op": "coord", "index": 7}}}, "/metric/scale"),
    ({"metric": {"kind": "diagonal", "entries": [1, 1]}}, "/metric/entries"),
    ({"extra": 1}, "/"),
    ({"version": 2}, "/version"),
])
def test_schema_pointers(patch, pointer):
    with pytest.raises(ScenarioError) as err:
        Scenario.from_json(_curvature(**patch))
    assert err.value.pointer.startswith(pointer)


def test_family_parameter_errors():
    fam = {"tag": "theorem2", "case": "a", "params": {"p1": 3, "p2": 3, "k": 0}}
    with pytest.raises(ScenarioError, match="U"):
        Scenario.from_json({"version": 1, "task": "verify-solution", "family": fam})
    fam["params"].update(U={"op": "coord", "index": 0}, z=1)
    with pytest.raises(ScenarioError) as err:
        Scenario.from_json({"version": 1, "task": "verify-solution", "family": fam})
    assert err.value.pointer == "/family/params/z"
    with pytest.raises(ScenarioError):
        Scenario.from_json({"version": 1, "task": "verify-solution"})


def test_array_file_pointer(tmp_path):
    bad = _curvature(task="nope")
    with pytest.raises(ScenarioError) as err:
        load(_write(tmp_path, [_curvature(), bad]))
    assert err.value.pointer == "/1/task"
    assert len(load(_write(tmp_path, [_curvature(), _curvature()], "ok.json"))) == 2


def test_catalog_tags_are_schema_enum():
    from ricci_forge.scenario import SCHEMA
    assert set(SCHEMA["properties"]["family"]["properties"]["tag"]["enum"]) == set(FAMILY_CATALOG)


def test_cli_pass_writes_report(tmp_path, capsys):
    out = tmp_path / "out"
    assert main(["run", _write(tmp_path, _curvature()), "--out", str(out), "--deterministic"]) == 0
    doc = json.loads((out / "report.json").read_text())
    assert doc["passed"] and doc["task"] == "curvature" and "timing" not in doc
    for name in doc["tables"].values():
        assert (out / name).exists()
    assert "PASS" in capsys.readouterr().out


def test_cli_failing_check_exits_1(tmp_path):
    doc = _curvature(params={"samples": 5, "expect_k12": 0.0})
    assert main(["run", _write(tmp_path, doc), "--quiet"]) == 1


def test_cli_invalid_scenario_exits_2(capsys):
    assert main(["run", str(SCENARIOS / "malformed.json")]) == 2
    err = json.loads(capsys.readouterr().err)
    assert err["pointer"] == "/metric/scale/arg" and err["error"] == "validation"


def test_cli_missing_file_exits_2(tmp_path):
    assert main(["run", str(tmp_path / "nope.json")]) == 2


def test_cli_pde_rejects_equal_two_by_two(tmp_path, capsys):
    doc = {"version": 1, "task": "pde-residual",
           "family": {"tag": "theorem1", "case": "a",
                      "params": {"p1": 2, "p2": 2, "a1": 1, "a2": 1, "b": [0, 0, 0, 0], "c": 1}}}
    assert main(["run", _write(tmp_path, doc), "--quiet"]) == 2
    assert "p1 = p2 = 2" in json.loads(capsys.readouterr().err)["message"]


def test_cli_math_error_exits_3(tmp_path, capsys):
    doc = _curvature(params={"points": [[0.0, 0.0, 0.0, -1.0]]})
    assert main(["run", _write(tmp_path, doc), "--quiet"]) == 3
    err = json.loads(capsys.readouterr().err)
    assert err["error"] == "math" and err["point"] == [0.0, 0.0, 0.0, -1.0]


def test_cli_deterministic_and_batch(tmp_path):
    path = _write(tmp_path, [_curvature(), _curvature(name="second", seed=9)])
    outs = []
    for k in range(2):
        out = tmp_path / f"o{k}"
        assert main(["run", path, "--out", str(out), "--deterministic", "--seed", "4", "--quiet"]) == 0
        outs.append(out)
    files = sorted(p.name for p in outs[0].iterdir())
    assert "report.json" in files and any(f.startswith("01-curvature") for f in files)
    for f in files:
        assert (outs[0] / f).read_bytes() == (outs[1] / f).read_bytes()
    doc = json.loads((outs[0] / "report.json").read_text())
    assert len(doc["reports"]) == 2 and doc["passed"]


def test_cli_oracle_mode(tmp_path):
    out = tmp_path / "o"
    assert main(["oracle", str(SCENARIOS / "conformal_check.json"), "--out", str(out),
                 "--deterministic", "--quiet"]) == 0
    assert json.loads((out / "report.json").read_text())["mode"] == "oracle"


def test_cli_families(capsys):
    assert main(["families"]) == 0
    tags = {e["tag"] for e in json.loads(capsys.readouterr().out)}
    assert tags == set(FAMILY_CATALOG)
    assert main(["families", "theorem1"]) == 0
    assert main(["families", "theorem9"]) == 2


@pytest.mark.skipif(shutil.which("ricci-forge") is None, reason="console script not installed")
def test_console_script():
    r = subprocess.run(["ricci-forge", "families", "theorem2"], capture_output=True, text=True)
    assert r.returncode == 0 and json.loads(r.stdout)["tag"] == "theorem2"


@pytest.mark.parametrize("name, code", [
    ("hyperbolic_curvature.json", 0), ("conformal_check.json", 0), ("theorem2_verify.json", 0),
    ("theorem1_singularity.json", 0), ("theorem1_pde.json", 1), ("flat_torus_variation.json", 0),
    ("identity_check.json", 0), ("bending.json", 0), ("malformed.json", 2),
])
def test_shipped_scenarios(name, code, tmp_path):
    assert main(["run", str(SCENARIOS / name), "--out", str(tmp_path), "--deterministic", "--quiet"]) == code


def test_expression_json_in_params_is_checked(tmp_path):
    doc = {"version": 1, "task": "conformal-check", "chart": {"kind": "box", "n": 4, "p1": 2},
           "metric": {"kind": "euclidean"}, "params": {"phi": {"op": "log"}}}
    with pytest.raises(ScenarioError) as err:
        Scenario.from_json(doc)
    assert err.value.pointer.startswith("/params/phi")
    assert ex.from_json({"op": "coord", "index": 0}) == ex.Coord(0)
