import json
import subprocess
import sys

import numpy as np
import pytest

from otmap.cli import main, read_cloud, InputError


def write(path, text):
    path.write_text(text)
    return str(path)


def run(*args):
    return subprocess.run([sys.executable, "-m", "otmap.cli", *args], capture_output=True, text=True)


def test_solve_identical_clouds(tmp_path, capsys):
    a = write(tmp_path / "a.csv", "x1,x2\n0,0\n1,2\n3,1\n")
    assert main(["solve", a, a]) == 0
    assert capsys.readouterr().out.splitlines()[0] == "cost 0.0"


def test_solve_worked_example(tmp_path):
    a = write(tmp_path / "a.csv", "x1\n0\n1\n")
    b = write(tmp_path / "b.csv", "0\n1\n2\n")
    out = tmp_path / "out"
    assert main(["solve", a, b, "--out", str(out)]) == 0
    rows = [line.split(",") for line in (out / "plan.csv").read_text().splitlines()[1:]]
    got = {(int(i), int(j)): float(w) for i, j, w in rows}
    want = {(0, 0): 1 / 3, (0, 1): 1 / 6, (1, 1): 1 / 6, (1, 2): 1 / 3}
    assert got.keys() == want.keys()
    assert all(abs(got[k] - v) < 1e-12 for k, v in want.items())
    assert json.loads((out / "cost.json").read_text())["cost"] == pytest.approx(0.5)
    assert (out / "potentials.csv").read_text().startswith("side,index,value\nsource,0,0.0\n")


def test_malformed_row_names_line(tmp_path):
    bad = write(tmp_path / "bad.csv", "x1,x2\n0,1\n2,oops\n")
    res = run("solve", bad, bad)
    assert res.returncode != 0
    assert "bad.csv:3" in res.stderr


def test_ragged_row_and_dimension_mismatch(tmp_path, capsys):
    ragged = write(tmp_path / "r.csv", "0,1\n2\n")
    with pytest.raises(InputError, match=":2: expected 2 columns"):
        read_cloud(ragged)
    a = write(tmp_path / "a.csv", "0,1\n2,3\n")
    b = write(tmp_path / "b.csv", "0\n2\n")
    assert main(["solve", a, b]) == 1
    assert "dimension mismatch" in capsys.readouterr().err


def test_weight_column(tmp_path):
    mu = read_cloud(write(tmp_path / "w.csv", "x1,weight\n0,1\n1,3\n"))
    np.testing.assert_allclose(mu.weights, [0.25, 0.75])


def test_kernel_check_table(capsys):
    assert main(["kernel-check", "--s", "1"]) == 0
    lines = capsys.readouterr().out.splitlines()
    table = {int(l.split()[0]): float(l.split()[1]) for l in lines[2:6]}
    assert abs(table[0] - 1) < 1e-6
    assert all(abs(table[j]) < 1e-6 for j in (1, 2, 3))
    assert lines[-1] == "moment check passed"


def test_stability_default(capsys):
    assert main(["stability"]) == 0
    assert capsys.readouterr().out.strip() == "100/100 hold"


def test_config_errors_listed_exhaustively(tmp_path, capsys):
    cfg = write(tmp_path / "c.json", json.dumps({
        "problem": {"kind": "linear", "dim": 2, "bogus": 1},
        "n_grid": [64], "reps": 0, "extra": True,
    }))
    assert main(["rates", "--config", cfg]) == 1
    err = capsys.readouterr().err
    assert "4 config error(s)" in err
    for needle in ("extra", "seed", "bogus", "reps"):
        assert needle in err


def test_rates_small_config_and_byte_identical(tmp_path, capsys):
    cfg = write(tmp_path / "r.json", json.dumps({
        "problem": {"kind": "linear", "dim": 5},
        "n_grid": [16, 32, 64, 128], "reps": 3, "seed": 4,
    }))
    assert main(["rates", "--config", cfg, "--out", str(tmp_path / "a")]) == 0
    assert main(["rates", "--config", cfg, "--out", str(tmp_path / "b"), "--threads", "2"]) == 0
    summary = json.loads((tmp_path / "a" / "summary.json").read_text())
    assert summary["theoretical_exponent"] == pytest.approx(-0.4)
    assert "fitted_slope" in summary
    for name in ("rates.csv", "summary.json"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_rates_threshold_exit_code(tmp_path):
    cfg = write(tmp_path / "r.json", json.dumps({
        "problem": {"kind": "linear", "dim": 2, "A": [[2, 0], [0, 1]]},
        "n_grid": [8, 16, 32, 64], "reps": 2, "seed": 1, "slope_tolerance": 0.0,
    }))
    assert main(["rates", "--config", cfg]) == 2


def test_barycenter_two_atoms(tmp_path, capsys):
    a = write(tmp_path / "a.csv", "0\n1\n")
    b = write(tmp_path / "b.csv", "0\n2\n")
    assert main(["barycenter", a, b]) == 0
    lines = capsys.readouterr().out.splitlines()
    assert lines == ["x1,weight", "0.0,0.5", "1.5,0.5"]


def test_indep_json(tmp_path, capsys):
    rng = np.random.default_rng(0)
    x = rng.uniform(size=(30, 1))
    data = np.hstack([x, x**2, rng.uniform(size=(30, 1))])
    path = tmp_path / "pairs.csv"
    np.savetxt(path, data, delimiter=",")
    cfg = write(tmp_path / "i.json", json.dumps({"data": "pairs.csv", "dx": 1, "null_draws": 200}))
    assert main(["indep", "--config", cfg, "--seed", "3", "--out", str(tmp_path / "o")]) == 0
    res = json.loads((tmp_path / "o" / "indep.json").read_text())
    assert set(res) == {"statistic", "n_times_stat", "critical_value", "reject", "alpha", "null_draws"}
    assert res["reject"] == (res["n_times_stat"] >= res["critical_value"])


def test_shipped_config_names(capsys):
    assert main(["rates", "--config", "no_such_config"]) == 1
    assert "rates_d5" in capsys.readouterr().err
