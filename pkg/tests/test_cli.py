import json
from pathlib import Path

import pytest

from doublefield.cli import main

ROOT = Path(__file__).resolve().parent.parent
CURVED = str(ROOT / "scenarios" / "curved.yaml")
MINIMAL = str(ROOT / "scenarios" / "minimal.yaml")


def run(capsys, *argv):
    code = main(list(argv))
    out = capsys.readouterr()
    return code, out.out, out.err


def test_scenarios_pass(capsys):
    for path in (MINIMAL, CURVED):
        code, out, _ = run(capsys, "run", path)
        assert code == 0
        assert out.rstrip().endswith("overall: PASS")


def test_json_is_deterministic(capsys, tmp_path):
    a, b = tmp_path / "a.json", tmp_path / "b.json"
    assert run(capsys, "run", CURVED, "--format", "json", "--out", str(a))[0] == 0
    assert run(capsys, "run", CURVED, "--format", "json", "--out", str(b))[0] == 0
    assert a.read_bytes() == b.read_bytes()
    doc = json.loads(a.read_text())
    assert doc["status"] == "PASS"
    kappa = next(t for t in doc["tasks"] if t["task"] == "scalar-curvature")
    assert kappa["result"]["kappa"] == "2"


def test_failed_expectation_exits_1(capsys):
    code, out, _ = run(capsys, "run", CURVED, "--set", "tasks.9.expect=false")
    assert code == 1
    assert "overall: FAIL" in out


@pytest.mark.parametrize("override, key", [
    ("m=0", "m"),
    ("field.g=[[1,0],[0]]", "field.g"),
    ("tasks.0=frobnicate", "tasks[0]"),
    ("tasks.0.task=x", "tasks.0.task"),
    ("bogus=1", "bogus"),
])
def test_validation_errors_exit_2(capsys, override, key):
    code, out, err = run(capsys, "run", MINIMAL, "--set", override)
    assert code == 2
    assert key in err and out == ""


def test_missing_file(capsys, tmp_path):
    code, _, err = run(capsys, "run", str(tmp_path / "none.yaml"))
    assert code == 2 and err


def test_bad_arguments(capsys):
    assert run(capsys, "nope")[0] == 2
    assert run(capsys, "bracket", "--X", "1,0,0,0")[0] == 2


def test_direct_bracket(capsys):
    code, out, _ = run(capsys, "bracket", "--X", "x2,0,0,0", "--Y", "e1", "--format", "json")
    assert code == 0
    res = json.loads(out)["tasks"][0]["result"]
    assert res["result"] == ["-1", "0", "0", "0"]


def test_direct_scalar_and_action(capsys):
    code, out, _ = run(capsys, "scalar", "--g", "1,0;0,1+x1^2", "--point", "1,0,0,0", "--format", "json")
    assert code == 0 and json.loads(out)["tasks"][0]["result"]["kappa"] == "2"
    code, out, _ = run(capsys, "action", "--g", "1,0;0,1+x1^2", "--order", "30", "--format", "json")
    assert code == 0
    val = float(json.loads(out)["tasks"][0]["result"]["action"])
    assert val == pytest.approx(2 + 3.141592653589793, rel=1e-12)


def test_direct_torsion_and_dirac(capsys):
    code, out, _ = run(capsys, "torsion", "--random-field", "--seed", "3", "--X", "e0", "--Y", "e1", "--Z", "e2")
    assert code == 0
    code, out, _ = run(capsys, "dirac", "--kind", "two_form", "--data", "0,x2;-x2,0", "--format", "json")
    assert code == 0
    D = json.loads(out)["tasks"][0]["result"]["structures"]["D"]
    assert D["isotropic"] is True and D["criteria_agree"] is True


def test_suite_command(capsys):
    code, out, _ = run(capsys, "suite", "--format", "json")
    assert code == 0
    doc = json.loads(out)
    assert doc["status"] == "PASS"
    assert "seconds" not in json.dumps(doc)


def test_suite_negative_control(capsys):
    code, out, err = run(capsys, "suite", "--corrupt-bracket")
    assert code == 1
    assert "axvCalg" in err and "overall: FAIL" in out
