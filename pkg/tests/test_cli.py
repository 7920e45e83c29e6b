import csv
import io
import json
import subprocess
import sys
from pathlib import Path

import pytest

from rrdpts import cli
from rrdpts.bound import grid_oracle

GOLDEN = Path(__file__).parent / "golden"


def run(argv, capsys):
    code = cli.main(argv)
    out, err = capsys.readouterr()
    return code, out, err


def test_bound_json(capsys):
    code, out, _ = run(["bound", "--L", "16", "--N", "7"], capsys)
    assert code == 0
    data = json.loads(out)
    assert data["iae_upper"] < 1
    assert len(data["argmax_x"]) == 8


def test_bound_matches_oracle(capsys):
    code, out, _ = run(["bound", "--L", "4", "--N", "1", "--oracle-step", "0.005"], capsys)
    data = json.loads(out)
    assert abs(data["iae_upper"] - grid_oracle(4, 1, 0.005).iae_upper) < 1e-4
    assert abs(data["iae_upper"] - data["oracle"]["iae_upper"]) < 1e-4


def test_bound_rejects_large_N(capsys):
    code, _, err = run(["bound", "--L", "8", "--N", "4"], capsys)
    assert code == 2
    assert "N exceeds L/2-1" in err


def test_usage_error_exit_code(capsys):
    with pytest.raises(SystemExit) as exc:
        cli.main(["bound", "--L", "8"])
    assert exc.value.code == 2


@pytest.mark.parametrize(
    "name, argv",
    [
        ("scan_L8_loss.csv", ["scan", "--L", "8", "--variable", "loss_db", "--start", "0", "--stop", "40",
                              "--step", "10", "--e-mis", "0.015"]),
        ("scan_L16_emis_fixed.csv", ["scan", "--L", "16", "--variable", "e_mis", "--start", "0", "--stop", "0.2",
                                     "--step", "0.05", "--loss-db", "10", "--no-optimize", "--mu", "0.1",
                                     "--v-th", "7"]),
    ],
)
def test_scan_golden(name, argv, capsys):
    code, out, _ = run(argv, capsys)
    assert code == 0
    assert out == (GOLDEN / name).read_text(encoding="utf-8")


def test_scan_schema_and_single_row(capsys, tmp_path):
    target = tmp_path / "one.csv"
    code, out, _ = run(["scan", "--start", "5", "--stop", "5", "--step", "1", "--out", str(target)], capsys)
    assert code == 0 and out == ""
    raw = target.read_bytes()
    assert b"\r" not in raw
    rows = list(csv.reader(io.StringIO(raw.decode("utf-8"))))
    assert rows[0] == ["loss_db", "R", "mu", "v_th", "Q", "e_I", "e_II", "e_III", "H", "e_src", "iae_upper"]
    assert len(rows) == 2 and rows[1][0] == "5"


@pytest.mark.parametrize(
    "argv",
    [
        ["scan", "--start", "5", "--stop", "1"],
        ["scan", "--step", "0"],
        ["scan", "--variable", "e_mis", "--start", "0", "--stop", "0.6", "--step", "0.1"],
        ["scan", "--L", "7"],
    ],
)
def test_scan_bad_spec(argv, capsys):
    code, _, err = run(argv, capsys)
    assert code == 2
    assert err.startswith("rrdpts: error:")


def test_rate_json(capsys):
    code, out, _ = run(["rate", "--L", "8", "--mu", "0.1", "--v-th", "2"], capsys)
    data = json.loads(out)
    assert code == 0
    assert data["summary"]["v_th"] == 2
    assert data["summary"]["key_rate_per_pulse"] >= 0


def test_simulate_byte_identical(capsys, tmp_path):
    argv = ["simulate", "--packets", "20000", "--seed", "42", "--L", "8", "--mu", "0.05"]
    _, first, _ = run(argv, capsys)
    _, second, _ = run(argv + ["--threads", "2"], capsys)
    assert first == second
    data = json.loads(first)
    assert data["seed"] == 42 and data["n_packets"] == 20000


def test_crosscheck_exit_codes(capsys):
    base = ["crosscheck", "--packets", "1e7", "--seed", "7", "--L", "8", "--mu", "0.05", "--loss-db", "3",
            "--p-d", "1e-5", "--e-mis", "0.03"]
    code, out, _ = run(base, capsys)
    assert code == 0, out
    assert out.rstrip().endswith("PASS")
    code, out, _ = run(base + ["--perturb-mu", "1.1"], capsys)
    assert code == 3
    assert out.rstrip().endswith("FAIL")


def test_crosscheck_default_params(capsys):
    code, out, _ = run(["crosscheck", "--packets", "1e7", "--seed", "1"], capsys)
    assert code == 0, out


def test_crosscheck_from_tally_file(capsys, tmp_path):
    tally = tmp_path / "t.json"
    run(["simulate", "--packets", "50000", "--seed", "3", "--out", str(tally)], capsys)
    code, _, _ = run(["crosscheck", "--tally", str(tally)], capsys)
    assert code == 0
    code, _, err = run(["crosscheck", "--tally", str(tally), "--e-mis", "0.2"], capsys)
    assert code == 2 and "do not match" in err


def test_config_file_and_override(capsys, tmp_path, monkeypatch):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("# operating point\nL = 16\nloss_db=20\nv_th=5\nmu=0.1\n", encoding="utf-8")
    _, out, _ = run(["rate", "--config", str(cfg)], capsys)
    s = json.loads(out)
    assert s["params"]["L"] == 16 and s["params"]["loss_db"] == 20 and s["summary"]["v_th"] == 5
    _, out, _ = run(["rate", "--config", str(cfg), "--loss-db", "5"], capsys)
    assert json.loads(out)["params"]["loss_db"] == 5

    monkeypatch.setenv(cli.CONFIG_ENV, str(cfg))
    _, out, _ = run(["rate"], capsys)
    assert json.loads(out)["params"]["L"] == 16

    bound_cfg = tmp_path / "bound.cfg"
    bound_cfg.write_text("L=8\nN=2\n", encoding="utf-8")
    code, out, _ = run(["bound", "--config", str(bound_cfg)], capsys)
    assert code == 0 and json.loads(out)["N"] == 2


def test_config_unknown_key(capsys, tmp_path):
    cfg = tmp_path / "bad.cfg"
    cfg.write_text("colour=blue\n", encoding="utf-8")
    code, _, err = run(["rate", "--config", str(cfg)], capsys)
    assert code == 2 and "colour" in err


def test_module_entry_point():
    proc = subprocess.run([sys.executable, "-m", "rrdpts", "bound", "--L", "8", "--N", "4"],
                          capture_output=True, text=True)
    assert proc.returncode == 2
    assert "N exceeds" in proc.stderr
