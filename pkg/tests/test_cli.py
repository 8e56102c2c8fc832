import json

import numpy as np
import pytest

from lcgeom.cli import main
from helpers import chain_p


def run(argv, capsys):
    with pytest.raises(SystemExit) as info:
        main(argv)
    out = capsys.readouterr()
    return info.value.code, out.out, out.err


def csv_rows(text):
    lines = text.strip().splitlines()
    return lines[0].split(","), np.array([[float(v) for v in ln.split(",")] for ln in lines[1:]])


def test_check_reports(capsys):
    code, out, _ = run(["check", "@flat1"], capsys)
    data = json.loads(out)
    assert code == 0 and data["integrable"] and data["projective"] and data["gamma"] == {}
    code, out, _ = run(["check", "@example"], capsys)
    data = json.loads(out)
    assert data["integrable"] and data["projective"] and data["n"] == 1
    code, out, _ = run(["check", "@nonintegrable2"], capsys)
    data = json.loads(out)
    assert code == 0 and data["integrable"] is False and data["defect_max"] > 0.1
    code, out, _ = run(["check", "@quartic"], capsys)
    assert json.loads(out)["projective"] is False


def test_metric_symbolic_and_numeric(capsys):
    code, out, _ = run(["metric", "@flat1"], capsys)
    data = json.loads(out)
    assert code == 0 and data["coords"] == ["x1", "u", "p1", "s"]
    code, out, _ = run(["metric", "@example", "--at", "0,0,1"], capsys)
    data = json.loads(out)
    assert data["signature"] == [2, 2, 0]
    assert data["g"][1][3] == 2.0


def test_flat_chain_csv(capsys):
    code, out, _ = run(["chain", "@flat1", "--at", "0,0,0", "--dir", "0,1,0", "--tspan", "0,2", "--samples", "5"], capsys)
    header, rows = csv_rows(out)
    assert code == 0 and header[:4] == ["t", "x1", "u", "p1"]
    np.testing.assert_allclose(rows[:, 2], rows[:, 0], atol=1e-12)
    np.testing.assert_allclose(rows[:, [1, 3]], 0, atol=1e-12)


def test_chain_csv_is_deterministic(capsys):
    argv = ["chain", "@example", "--at", "0,0,1", "--dir", "1,0.5,0", "--samples", "21"]
    _, a, _ = run(argv, capsys)
    _, b, _ = run(argv, capsys)
    assert a == b


def test_multiple_directions_and_json(capsys, tmp_path):
    target = tmp_path / "c.csv"
    code, _, _ = run(["chain", "@flat1", "--at", "0,0,0", "--dir", "0,1,0", "--dir", "1,1,0",
                      "--samples", "3", "-o", str(target)], capsys)
    header, rows = csv_rows(target.read_text())
    assert code == 0 and header[0] == "curve" and sorted(set(rows[:, 0])) == [0.0, 1.0]
    code, out, _ = run(["chain", "@flat1", "--at", "0,0,0", "--dir", "0,1,0", "--format", "json", "--lift"], capsys)
    data = json.loads(out)
    assert data["coords"] == ["x1", "u", "p1", "s"]


def test_contact_direction_exit_2(capsys):
    code, _, err = run(["chain", "@flat1", "--at", "0,0,0", "--dir", "1,0,1"], capsys)
    assert code == 2 and "contact_nonnull" in err


def test_missing_file_and_bad_flags_exit_1(capsys, tmp_path):
    code, _, _ = run(["check", str(tmp_path / "nope.json")], capsys)
    assert code == 1
    bad = tmp_path / "bad.json"
    bad.write_text('{"n": 1, "f": [["p1 +"]]}')
    assert run(["check", str(bad)], capsys)[0] == 1
    assert run(["chain", "@flat1", "--at", "0,0", "--dir", "0,1,0"], capsys)[0] == 1
    assert run(["chain", "@flat1", "--at", "a,b,c", "--dir", "0,1,0"], capsys)[0] == 1
    assert run(["nonsense"], capsys)[0] == 1


def test_null_chain_family(capsys):
    code, out, _ = run(["null-chain", "@flat2", "--at", "0,0,0,0,0", "--dir", "1,0,0,0,1",
                        "--k", "0", "--k", "1", "--samples", "5"], capsys)
    header, rows = csv_rows(out)
    assert code == 0 and header[0] == "curve" and len(rows) == 10
    code, _, err = run(["null-chain", "@flat2", "--at", "0,0,0,0,0", "--dir", "1,0,0,0,0"], capsys)
    assert code == 0 and "note" in err
    code, _, err = run(["null-chain", "@flat2", "--at", "0,0,0,0,0", "--dir", "0,0,1,0,0"], capsys)
    assert code == 2 and "transverse" in err


def test_kflow(capsys):
    code, out, err = run(["kflow", "@example", "--at", "0.1,0.2,0.3", "--tspan", "0,2", "--samples", "3"], capsys)
    header, rows = csv_rows(out)
    assert code == 0 and header[4] == "s" and "projection drift" in err
    np.testing.assert_allclose(rows[:, 1:4], [[0.1, 0.2, 0.3]] * 3, atol=1e-12)


def test_kropina_two_point_matches_chain(capsys):
    start, end = f"0,{chain_p(0.1)!r}", f"0,{chain_p(0.9)!r}"
    code, out, err = run(["kropina-geodesic", "@example", "--x-range", "0.1,0.9", "--start", start,
                          "--end", end, "--guess", "0.3,1", "--samples", "9"], capsys)
    header, rows = csv_rows(out)
    assert code == 0 and "shooting" in err
    np.testing.assert_allclose(rows[:, 3], [chain_p(x) for x in rows[:, 1]], atol=1e-8)
    code, out, _ = run(["kropina-geodesic", "@example", "--x-range", "0,0.5", "--state", "0,1,0.5,0.2",
                        "--samples", "3"], capsys)
    assert code == 0
    assert run(["kropina-geodesic", "@flat2", "--x-range", "0,1", "--state", "0,1,0.5,0.2"], capsys)[0] == 1
    assert run(["kropina-geodesic", "@example", "--x-range", "0,1"], capsys)[0] == 1


def test_project_paths(capsys):
    code, out, err = run(["project-paths", "@example", "--at", "0,0,1", "--dir", "1,0.5,0.2", "--tspan", "0,0.5"], capsys)
    assert code == 0 and "max path residual" in err
    code, _, _ = run(["project-paths", "@quartic", "--at", "0,0,1", "--dir", "1,2,0.5", "--tspan", "0,0.3"], capsys)
    assert code == 3


def test_verify_example(capsys, tmp_path):
    code, out, _ = run(["verify-example"], capsys)
    assert code == 0 and out.count("[PASS]") == 4
    code, out, _ = run(["verify-example", "--json"], capsys)
    assert code == 0 and json.loads(out)["passed"]
    perturbed = tmp_path / "p.json"
    perturbed.write_text(json.dumps({"n": 1, "f": "0.51*(p1 + exp(-2*x1)*p1^3)"}))
    code, out, err = run(["verify-example", "--structure", str(perturbed)], capsys)
    assert code == 3 and "2" in err and "[FAIL] check 2" in out


def test_pw_compare(capsys):
    code, out, _ = run(["pw-compare", "@example_gamma", "--points", "20"], capsys)
    data = json.loads(out)
    assert code == 0 and data["branch+_max_error"] <= 1e-10 and data["branch-_max_error"] <= 1e-10


def test_classify(capsys):
    assert run(["classify", "@flat1", "--at", "0,0,0", "--dir", "0,1,0"], capsys)[1].strip() == "transverse"
    assert run(["classify", "@flat2", "--at", "0,0,0,0,0", "--dir", "1,0,0,0,1"], capsys)[1].strip() == "null_generic"


def test_model_commands(capsys):
    code, out, _ = run(["model", "classify", "--X", "0,0", "--Y", "0,0", "--z", "1"], capsys)
    assert code == 0 and out.strip() == "transverse"
    code, out, _ = run(["model", "chain", "--X", "0,0", "--Y", "0,0", "--z", "1", "--trange", "0,2", "--samples", "3"], capsys)
    lines = out.strip().splitlines()
    assert lines[2] == "1,1,0,0,1,-1,0,0,1"
    code, out, _ = run(["model", "null-chain", "--X", "1,0", "--Y", "0,1", "--samples", "3"], capsys)
    assert out.strip().splitlines()[3] == "1,1,1,0,0,0,0,-1,1"
    code, out, _ = run(["model", "connect", "1,0,0,0:0,0,0,1", "0,0,0,1:1,0,0,0"], capsys)
    assert json.loads(out)["kind"] == "chain"
    code, out, _ = run(["model", "connect", "1,0,0,0:0,0,0,1", "0,1,0,0:0,0,1,0"], capsys)
    assert json.loads(out)["kind"] == "null_chain_family"
    assert run(["model", "connect", "1,0,0,0:0,0,0,1", "2,0,0,0:0,0,0,5"], capsys)[0] == 2
    assert run(["model", "chain", "--X", "1,0", "--Y", "0,1"], capsys)[0] == 2
    assert run(["model", "connect", "1,0,0,0", "0,1,0,0:0,0,1,0"], capsys)[0] == 1
