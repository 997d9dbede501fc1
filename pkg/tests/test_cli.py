import json
import subprocess
import sys

import pytest

from splineortho.cli import main


def _run(argv, capsys):
    code = main([str(a) for a in argv])
    out = capsys.readouterr()
    return code, out.out, out.err


@pytest.fixture
def dyadic_file(tmp_path):
    path = tmp_path / "dyadic.txt"
    assert main(["knots", "gen", "--kind", "dyadic", "--k", "2", "--n", "62", "--out", str(path)]) == 0
    return path


def test_gen_and_check_dyadic(tmp_path, capsys):
    path = tmp_path / "d.txt"
    code, _, _ = _run(["knots", "gen", "--kind", "dyadic", "--k", "2", "--n", "31", "--out", path], capsys)
    assert code == 0
    code, out, _ = _run(["knots", "check", path], capsys)
    rows = json.loads(out)
    assert code == 0 and rows[0]["ell"] == 1 and rows[0]["gamma"] == 2.0
    assert [r["ell"] for r in rows] == [1, 2]


def test_check_rejects_ell_above_k(dyadic_file, capsys):
    code, _, err = _run(["knots", "check", "--ell", "3", "--k", "2", dyadic_file], capsys)
    assert code == 2 and "ell" in err


def test_gen_adversarial_writes_sidecar(tmp_path, capsys):
    path = tmp_path / "adv.txt"
    code, _, _ = _run(["knots", "gen", "--kind", "adversarial", "--k", "2", "--ell", "8", "--delta", "2e-4",
                       "--out", path], capsys)
    assert code == 0
    stages = json.loads((tmp_path / "adv.txt.stages.json").read_text())
    assert len(stages["stages"]) == 8


def test_gen_adversarial_infeasible_is_usage_error(capsys):
    code, _, err = _run(["knots", "gen", "--kind", "adversarial", "--ell", "20", "--delta", "0.1"], capsys)
    assert code == 2 and "infeasible" in err


def test_gen_requires_n(capsys):
    assert _run(["knots", "gen", "--kind", "random"], capsys)[0] == 2


def test_build_and_verify(tmp_path, dyadic_file, capsys):
    dump = tmp_path / "sys.json"
    code, _, _ = _run(["system", "build", "--knots", dyadic_file, "--N", "63", "--out", dump], capsys)
    assert code == 0
    code, out, _ = _run(["system", "verify", "--knots", dyadic_file, "--dump", dump], capsys)
    report = json.loads(out)
    assert code == 0 and report["failures"] == []
    assert report["orthonormality_error"] < 1e-9


def test_verify_catches_corrupted_dump(tmp_path, dyadic_file, capsys):
    dump = tmp_path / "sys.json"
    _run(["system", "build", "--knots", dyadic_file, "--N", "63", "--out", dump], capsys)
    rows = json.loads(dump.read_text())
    rows[-10]["w"][3] += 1e-3
    dump.write_text(json.dumps(rows))
    code, out, err = _run(["system", "verify", "--knots", dyadic_file, "--dump", dump], capsys)
    assert code == 1 and "orthonormality" in err
    assert json.loads(out)["failures"]


def test_build_rejects_small_N(dyadic_file, capsys):
    assert _run(["system", "build", "--knots", dyadic_file, "--N", "1"], capsys)[0] == 2


def test_missing_file_is_usage_error(tmp_path, capsys):
    assert _run(["knots", "check", tmp_path / "nope.txt"], capsys)[0] == 2


def test_bad_flag_is_usage_error(capsys):
    assert _run(["system", "build", "--N", "x"], capsys)[0] == 2
    assert _run(["experiment", "divergence", "--ladder", "0,2"], capsys)[0] == 2


def test_divergence_csv(capsys):
    code, out, _ = _run(["experiment", "divergence", "--ladder", "2,4,8"], capsys)
    lines = out.strip().splitlines()
    assert code == 0 and lines[0] == "ell,G,stage_sum,min_coeff_product" and len(lines) == 4
    sums = [float(line.split(",")[2]) for line in lines[1:]]
    assert sums == sorted(sums)


def test_equivalence_is_deterministic(tmp_path, capsys):
    argv = ["experiment", "equivalence", "--atoms", "4", "--N", "64", "--trials", "20", "--seed", "3"]
    a, b = tmp_path / "a.json", tmp_path / "b.json"
    assert _run(argv + ["--out", a], capsys)[0] == 0
    assert _run(argv + ["--out", b], capsys)[0] == 0
    assert a.read_bytes() == b.read_bytes()
    rep = json.loads(a.read_text())
    assert len(rep["norms"]) == 4 and "eta/S" in rep["ratios"]


def test_equivalence_curves_and_csv(tmp_path, capsys):
    curves = tmp_path / "c.csv"
    code, out, _ = _run(["experiment", "equivalence", "--atoms", "2", "--N", "32", "--trials", "5",
                         "--format", "csv", "--curves", curves], capsys)
    assert code == 0 and out.startswith("atom,eta,S,P,sign")
    assert curves.read_text().startswith("x,P,S")


def test_khinchin_sweep(capsys):
    code, out, _ = _run(["experiment", "khinchin", "--atoms", "3", "--N", "32", "--trials", "60"], capsys)
    rep = json.loads(out)
    assert code == 0 and set(rep["norms"][0]["sup"]) == {"1", "10", "50", "60"}


def test_thread_cap_does_not_change_output(tmp_path, dyadic_file, monkeypatch, capsys):
    a, b = tmp_path / "a.json", tmp_path / "b.json"
    _run(["system", "build", "--knots", dyadic_file, "--N", "40", "--out", a], capsys)
    monkeypatch.setenv("SPLINEORTHO_THREADS", "3")
    _run(["system", "build", "--knots", dyadic_file, "--N", "40", "--threads", "8", "--out", b], capsys)
    assert a.read_bytes() == b.read_bytes()


def test_module_entry_point():
    proc = subprocess.run([sys.executable, "-m", "splineortho", "knots", "gen", "--n", "3"],
                          capture_output=True, text=True)
    assert proc.returncode == 0 and json.loads(proc.stdout) == {"k": 2, "points": [0.5, 0.25, 0.75]}
