import io
import json
import subprocess
import sys

import pytest

from hirota_ew import conventions
from hirota_ew.cli import EXIT_FAIL, EXIT_INPUT, EXIT_OK, run


def _run(argv):
    buf = io.StringIO()
    code = run(argv, stdout=buf)
    return code, (json.loads(buf.getvalue()) if buf.getvalue() else None)


def _check(report, name):
    return next(c for c in report["checks"] if c["name"] == name)


def test_verify_ew_example():
    code, rep = _run(["verify-ew", "--w", "y*exp(x)+z*exp(2*x)", "--a", "1", "--b", "2",
                      "--points", "20", "--seed", "7"])
    assert code == EXIT_OK
    assert _check(rep, "einstein_weyl_residual")["max_residual"] <= 1e-9
    assert set(rep) >= {"command", "params", "seed", "conventions_digest", "checks", "timestamp"}
    assert rep["seed"] == 7 and rep["conventions_digest"] == conventions.digest()
    for c in rep["checks"]:
        assert set(c) == {"name", "max_residual", "tolerance", "pass"}


def test_verify_jacobi_example():
    code, rep = _run(["verify-jacobi", "--w", "x*y+z", "--a", "1", "--b", "2", "--lambda", "1"])
    assert code == EXIT_FAIL
    assert rep["results"]["components_at_first_point"]["J"]["x,p0,p1"] == pytest.approx(-2.0, abs=1e-10)


def test_heisenberg_example():
    code, rep = _run(["heisenberg", "--eps", "1", "--a", "1", "--b", "2"])
    assert code == EXIT_OK
    assert rep["results"]["lambda4"] == -1.0
    assert _check(rep, "hirota_residual")["max_residual"] == 0.0


@pytest.mark.parametrize("argv", [
    ["verify-ew", "--w", "x*y + k*z"],
    ["verify-ew", "--w", "x*y +* z"],
    ["verify-ew", "--w", "x*y+z", "--a", "2", "--b", "2"],
    ["verify-ew", "--w", "x*y+z", "--bogus"],
    ["verify-ew", "--w", "x*y+z", "--tol", "0"],
    ["no-such-command"],
    ["deform", "--eps", "0.1", "--g", "lambda_unknown"],
])
def test_invalid_input_exits_2(argv, capsys):
    assert run(argv, stdout=io.StringIO()) == EXIT_INPUT
    assert capsys.readouterr().err


def test_parameters_bind():
    code, rep = _run(["verify-ew", "--w", "y*exp(k*x)+z*exp(2*k*x)", "--param", "k=0.5",
                      "--a", "1", "--b", "2", "--points", "5"])
    assert code == EXIT_OK and rep["params"]["param"] == ["k=0.5"]


def test_same_seed_same_report():
    argv = ["lax-commutator", "--w", "x*y+z^2*x", "--points", "6", "--seed", "3"]
    _, r1 = _run(argv)
    _, r2 = _run(argv)
    r1.pop("timestamp"), r2.pop("timestamp")
    assert json.dumps(r1, sort_keys=True) == json.dumps(r2, sort_keys=True)
    _, r3 = _run(argv[:-1] + ["4"])
    r3.pop("timestamp")
    assert r3 != r1


def test_config_file(tmp_path):
    cfg = tmp_path / "job.json"
    cfg.write_text(json.dumps({"command": "verify-ew", "w": "y*exp(x)+z*exp(2*x)", "points": 3}))
    code, rep = _run(["verify-ew", "--config", str(cfg)])
    assert code == EXIT_OK and rep["params"]["points"] == 3
    # explicit flags override the file
    _, rep = _run(["verify-ew", "--config", str(cfg), "--points", "4"])
    assert rep["params"]["points"] == 4
    cfg.write_text(json.dumps({"w": "x", "colour": 1}))
    assert run(["verify-ew", "--config", str(cfg)], stdout=io.StringIO()) == EXIT_INPUT
    cfg.write_text(json.dumps({"command": "heisenberg"}))
    assert run(["verify-ew", "--config", str(cfg)], stdout=io.StringIO()) == EXIT_INPUT


def test_csv_and_out(tmp_path):
    out, csv = tmp_path / "r.json", tmp_path / "j.csv"
    code = run(["verify-jacobi", "--w", "y*exp(x)+z*exp(2*x)", "--points", "3",
                "--csv", str(csv), "--out", str(out)], stdout=io.StringIO())
    assert code == EXIT_OK
    assert json.loads(out.read_text())["command"] == "verify-jacobi"
    assert csv.read_text().splitlines()[0] == "lambda,x,y,z,maxJ"
    csv = tmp_path / "r.csv"
    assert run(["lax-commutator", "--H", "X^2/2 + X*T", "--points", "3", "--csv", str(csv)],
               stdout=io.StringIO()) == EXIT_FAIL
    assert csv.read_text().splitlines()[0] == "X,Y,T,lambda,residual"


def test_solve_hypercr(tmp_path):
    csv = tmp_path / "H.csv"
    code, rep = _run(["solve-hypercr", "--nx", "16", "--nt", "16", "--steps", "8",
                      "--init-H", "X^2/2", "--background", "X^2/2", "--exact", "X^2/2",
                      "--csv", str(csv)])
    assert code == EXIT_OK
    assert _check(rep, "error_vs_exact")["max_residual"] < 1e-12
    assert csv.exists()
    code, rep = _run(["solve-hypercr", "--nx", "16", "--nt", "16", "--steps", "8",
                      "--init-G", "1e150*sin(X)", "--y-final", "1"])
    assert code == EXIT_FAIL and not _check(rep, "no_blow_up")["pass"]
    assert run(["solve-hypercr", "--y-final", "3"], stdout=io.StringIO()) == EXIT_INPUT


@pytest.mark.parametrize("argv,expected", [
    (["veronese-check", "--w", "y*exp(x)+z*exp(2*x)", "--points", "4"], EXIT_OK),
    (["jones-tod", "--w", "y*exp(x)+z*exp(2*x)", "--points", "4"], EXIT_OK),
    (["eform-check", "--w", "y*exp(x)+z*exp(2*x)", "--points", "4"], EXIT_OK),
    (["eform-check", "--w", "x*y+z", "--points", "4"], EXIT_FAIL),
    (["twistor-recursion", "--H", "X^2/2"], EXIT_OK),
    (["twistor-recursion", "--H", "X^2/2 + 0.1*X*Y^3"], EXIT_FAIL),
    (["deform", "--eps", "0.1",
      "--closed-form", "(m0 + l*m1 + l^2*m2)/(1 - 0.1*(m0 + l*m1 + l^2*m2))"], EXIT_OK),
    (["hierarchy-check", "--w", "x0*exp(2*x) + x1*exp(x) + x2*exp(2*x/3)"], EXIT_OK),
    (["hierarchy-check", "--w", "x*x0^2 + x1*x2^2 + exp(x*x1)"], EXIT_FAIL),
])
def test_other_commands(argv, expected):
    assert run(argv, stdout=io.StringIO()) == expected


def test_module_entry_point():
    proc = subprocess.run([sys.executable, "-m", "hirota_ew", "heisenberg"],
                          capture_output=True, text=True)
    assert proc.returncode == 0
    assert json.loads(proc.stdout)["command"] == "heisenberg"
