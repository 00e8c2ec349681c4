import csv
import io
import json

import numpy as np
import pytest

from sigos import oscillatory as osc
from sigos.cli import main
from sigos.oscillatory import SampledFunction


def run(capsys, *args):
    code = main([str(a) for a in args])
    out = capsys.readouterr()
    return code, out.out, out.err


def table(text):
    return list(csv.DictReader(io.StringIO(text)))


@pytest.fixture
def bump_input(tmp_path):
    f = SampledFunction.from_callable(lambda W: osc.radial_bump(W - 0.1, 0.3), 1, 1 / 128, [-1], [1])
    path = tmp_path / "f.json"
    f.save(path)
    return f, path


def test_exponents_single_point(capsys):
    code, out, _ = run(capsys, "exponents", "--n", 3, "--sigma", 0, "--k", 2, "--d", 2)
    assert code == 0
    rows = {r["function"]: r for r in table(out)}
    assert rows["main_threshold"]["value"] == "4"
    assert rows["p_dec"]["value"] == "inf"
    assert list(table(out)[0]) == ["n", "sigma", "k", "function", "value", "regime"]


def test_exponents_table_and_closure(capsys, tmp_path):
    out_path = tmp_path / "t.csv"
    code, _, _ = run(capsys, "exponents", "--n", 4, "--table", "--out", out_path)
    assert code == 0
    rows = table(out_path.read_text())
    assert {r["sigma"] for r in rows} == {"1", "3"}
    code, out, _ = run(capsys, "exponents", "--verify-closure", "--max-n", 6)
    assert code == 0 and all(r["pass"] == "True" for r in table(out))


@pytest.mark.parametrize("args", [
    ["exponents", "--n", 3, "--sigma", 1],
    ["exponents"],
    ["bogus"],
    ["exponents", "--n", "three"],
])
def test_parameter_errors_exit_1(capsys, args):
    code, _, err = run(capsys, *args)
    assert code == 1 and err


def test_geometry_fuzz(capsys):
    code, out, err = run(capsys, "geometry-fuzz", "--n", 4, "--sigma", 1, "--dim-v", 2,
                         "--trials", 50, "--seed", 7)
    rows = table(out)
    assert code == 0 and len(rows) == 50 and "violations: 0" in err
    assert list(rows[0]) == ["trial", "dimV", "dimVaux", "eigcount", "bound", "pass"]


def test_operator_matches_library(capsys, bump_input, tmp_path):
    f, path = bump_input
    out_path = tmp_path / "field.csv"
    code, _, _ = run(capsys, "operator", "--phase", "extension:1,2", "--region", "-4,4x0,2",
                     "--res", 0.5, "--input", path, "--out", out_path)
    assert code == 0
    rows = table(out_path.read_text())
    assert list(rows[0]) == ["x1", "x2", "re", "im"]
    axes = [osc.grid_axis(-4, 4, 0.5), osc.grid_axis(0, 2, 0.5)]
    ref = osc.extension(np.eye(1), f, axes).values.ravel()
    got = np.array([float(r["re"]) + 1j * float(r["im"]) for r in rows])
    assert np.max(np.abs(got - ref)) <= 1e-12


def test_operator_errors(capsys, bump_input):
    _, path = bump_input
    assert run(capsys, "operator", "--phase", "hd:3", "--region", "0,1x0,1",
               "--input", path)[0] == 1
    assert run(capsys, "operator", "--phase", "extension:1,2", "--region", "1,0x0,1",
               "--input", path)[0] == 1


def test_wavepacket_diagnostics(capsys, bump_input):
    _, path = bump_input
    code, out, _ = run(capsys, "wavepackets", "--input", path, "--R", 64, "--diag", "reconstruct")
    vals = {r["metric"]: float(r["value"]) for r in table(out)}
    assert code == 0 and vals["relative_error"] <= 1e-6
    code, out, _ = run(capsys, "wavepackets", "--input", path, "--R", 64, "--diag", "ortho")
    vals = {r["metric"]: float(r["value"]) for r in table(out)}
    assert 0.25 <= vals["mass_ratio"] <= 4
    code, out, _ = run(capsys, "wavepackets", "--input", path, "--R", 64,
                       "--diag", "tube:0.25,3.0")
    fr = [float(r["mass_fraction"]) for r in table(out)]
    assert code == 0 and fr == sorted(fr) and fr[-1] >= 0.99
    code, out, err = run(capsys, "wavepackets", "--input", path, "--R", 64,
                         "--diag", "tangent:0,1")
    assert code == 0 and "tangent packets" in err
    rows = table(out)
    # tube direction (-w1, 1) within R^{-1/2 + delta_m} of the x2 axis
    assert rows and all(np.arctan(abs(float(r["w1"]))) <= 64 ** -0.3 for r in rows)
    assert run(capsys, "wavepackets", "--input", path, "--R", 64, "--diag", "nope")[0] == 1


def test_example_scan(capsys, tmp_path):
    out_path = tmp_path / "scan.csv"
    code, _, err = run(capsys, "example", "--kind", "tensor_multi", "--n", 3, "--sigma", 0,
                       "--k", 2, "--lambda-list", "16,32,64", "--p", 4, "--out", out_path)
    rows = table(out_path.read_text())
    assert code == 0 and [float(r["lambda"]) for r in rows] == [16, 32, 64]
    assert list(rows[0]) == ["lambda", "lhs", "rhs", "ratio", "predicted_exponent"]
    assert "ratio slope" in err


def test_decoupling_scan(capsys, tmp_path):
    basis = tmp_path / "V.json"
    basis.write_text(json.dumps([[0, 1, 0], [0, 0, 1]]))
    code, out, err = run(capsys, "decoupling", "--form", "2:3", "--V", basis, "--p", 4,
                         "--delta-list", "1/16,1/32,1/64", "--trials", 1)
    rows = table(out)
    assert code == 0 and len(rows) == 3 and "growth exponent" in err
    assert list(rows[0]) == ["delta", "slabs", "overlap", "random_max", "extremal", "ratio", "bound"]
    code, _, err = run(capsys, "decoupling", "--form", "0:3", "--V", "1,0,0;0,1,0;0,0,1",
                       "--p", 6, "--delta-list", "1/16,1/32,1/64", "--trials", 1)
    assert code == 0 and "outside proven range" in err
    assert run(capsys, "decoupling", "--form", "3", "--V", "1,0,0", "--p", 4)[0] == 1
    assert run(capsys, "decoupling", "--form", "2:3", "--V", "1,0", "--p", 4)[0] == 1


def test_localize_exit_codes(capsys):
    args = ["localize", "--phase", "extension:1,2", "--lambda", 1024, "--K", 16, "--tau", 0.2]
    code, out, _ = run(capsys, *args)
    assert code == 0 and float(table(out)[0]["leakage"]) <= 1e-3
    assert run(capsys, *args, "--max-leakage", 0)[0] == 2
    assert run(capsys, "localize", "--phase", "extension:1,2", "--lambda", 64, "--K", 16,
               "--tau", 0.2)[0] == 1


def test_demo_equidistribution(capsys):
    code, out, _ = run(capsys, "demo-equidistribution", "--R", 64, "--rho-list", "1,8,64",
                       "--form", "hyperbolic")
    rows = table(out)
    assert code == 0 and [float(r["rho"]) for r in rows] == [1, 8, 64]
    assert float(rows[-1]["ratio"]) == pytest.approx(1.0)
    assert run(capsys, "demo-equidistribution", "--R", 100)[0] == 1


SMALL = {"name": "tiny", "lambda_list": [16, 32, 64],
         "scans": [{"kind": "tensor_multi", "quantity": "ratio", "slope": 0.0, "tolerance": 0.2}]}


def test_run_config(capsys, tmp_path):
    cfg = tmp_path / "c.json"
    conf = json.loads(json.dumps(SMALL))
    cfg.write_text(json.dumps(conf))
    code, _, err = run(capsys, "run", cfg, "--out", tmp_path / "out")
    assert code == 0 and "pass" in err
    first = (tmp_path / "out" / "tiny.csv").read_bytes()
    assert run(capsys, "run", cfg, "--out", tmp_path / "out")[0] == 0
    assert (tmp_path / "out" / "tiny.csv").read_bytes() == first
    assert (tmp_path / "out" / "tiny.svg").exists() and (tmp_path / "out" / "tiny.json").exists()
    conf["scans"][0]["slope"] = 1.0
    cfg.write_text(json.dumps(conf))
    assert run(capsys, "run", cfg, "--out", tmp_path / "out")[0] == 2
    cfg.write_text(json.dumps({"name": "x"}))
    code, _, err = run(capsys, "run", cfg)
    assert code == 1 and "lambda_list" in err
