import json
import subprocess
import sys

import numpy as np
import pytest

from deconvest.cli import main


def run(argv, capsys):
    try:
        code = main(argv)
    except SystemExit as exc:
        code = exc.code
    out = capsys.readouterr()
    return code, out.out, out.err


@pytest.fixture
def ar1_file(tmp_path, capsys):
    path = tmp_path / "traj.csv"
    code, _, _ = run(["simulate", "--model", "ar1", "--n", "400", "--seed", "3", "--out", str(path)], capsys)
    assert code == 0
    return path


def test_estimate_contract(ar1_file, capsys):
    code, out, _ = run(["estimate", "--method", "contrast", "--model", "ar1", "--sigma-eps2", "0.1",
                        "--input", str(ar1_file)], capsys)
    payload = json.loads(out)
    assert code == 0
    assert {"theta_hat", "sigma_matrix", "ci", "seconds"} <= set(payload)
    assert len(payload["ci"]) == 2


def test_estimate_is_reproducible(ar1_file, capsys):
    argv = ["estimate", "--method", "bootstrap", "--particles", "300", "--seed", "4",
            "--omit-timing", "--input", str(ar1_file)]
    first = run(argv, capsys)[1]
    assert first == run(argv, capsys)[1]


def test_simulate_is_byte_reproducible(tmp_path, capsys):
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    for p in (a, b):
        run(["simulate", "--model", "sv", "--n", "50", "--seed", "8", "--out", str(p)], capsys)
    assert a.read_bytes() == b.read_bytes()


def test_ingest_three_prices(tmp_path, capsys):
    src, dst = tmp_path / "p.csv", tmp_path / "z.csv"
    src.write_text("price\n100\n101\n100.5\n")
    code, out, _ = run(["ingest", "--input", str(src), "--out", str(dst)], capsys)
    assert code == 0 and json.loads(out)["n"] == 2
    assert len(dst.read_text().strip().splitlines()) == 3


def test_mc_study_writes_report(tmp_path, capsys):
    out_json, out_csv = tmp_path / "r.json", tmp_path / "r.csv"
    code, out, _ = run(["mc-study", "--methods", "contrast,qml,bootstrap,apf,ksapf", "--n", "150",
                        "--reps", "2", "--seed", "7", "--particles", "200", "--omit-timing",
                        "--out", str(out_json), "--csv", str(out_csv)], capsys)
    assert code == 0
    report = json.loads(out_json.read_text())
    assert set(report["methods"]) == {"contrast", "qml", "bootstrap", "apf", "ksapf"}
    assert out_csv.read_text().startswith("method,replicate")


def test_coverage_command(tmp_path, capsys):
    out_json = tmp_path / "c.json"
    code, out, _ = run(["coverage", "--n", "300", "--reps", "3", "--seed", "1", "--out", str(out_json)], capsys)
    assert code == 0 and len(json.loads(out)["coverage"]) == 1


@pytest.mark.parametrize("argv", [
    ["estimate", "--input", "/nonexistent.csv"],
    ["estimate", "--input", "x.csv", "--method", "nope"],
    ["simulate", "--out", "x.csv", "--phi", "1.5"],
    ["estimate", "--input", "x.csv", "--box", "0.1,0.2"],
])
def test_input_errors_exit_one(argv, capsys):
    code, _, err = run(argv, capsys)
    assert code == 1
    assert "error" in json.loads(err)


def test_estimation_error_exits_two(tmp_path, capsys):
    p = tmp_path / "z.csv"
    p.write_text("z\n" + "\n".join(str(v) for v in np.zeros(10)) + "\n")
    # phi = 0 everywhere in the box makes V singular
    code, _, err = run(["estimate", "--input", str(p), "--box", "0,0,0.2,1"], capsys)
    assert code == 2 and json.loads(err)["error"] == "estimation"


def test_console_entry_point(ar1_file):
    proc = subprocess.run([sys.executable, "-m", "deconvest.cli", "estimate", "--method", "qml",
                           "--input", str(ar1_file)], capture_output=True, text=True)
    assert proc.returncode == 0 and "theta_hat" in proc.stdout
