import json
import subprocess
import sys

import pytest

from ness_radius.cli import build_parser, main, rational


def run(argv, capsys):
    code = main(argv)
    out = capsys.readouterr()
    return code, out.out, out.err


def test_rational_parsing():
    from fractions import Fraction

    assert rational("1/2") == Fraction(1, 2)
    assert rational("2^-3") == Fraction(1, 8)
    assert rational("0.1") == Fraction(1, 10)


def test_radius_examples(capsys):
    code, out, _ = run(["radius", "--mode", "epsilon", "--N", "2", "--delta", "1/2", "--mu", "1/2"], capsys)
    assert code == 0 and "n0=2" in out
    code, out, _ = run(["radius", "--mode", "epsilon", "--N", "4", "--delta", "0", "--mu", "1/2"], capsys)
    assert code == 0 and "n0=6" in out and "lambda=2.0" in out
    code, out, _ = run(["radius", "--mode", "mu", "--N", "3", "--delta", "1", "--epsilon", "1"], capsys)
    assert code == 0 and "n0=4" in out
    lam = float(out.split("lambda=")[1].split()[0])
    assert lam > 1


def test_exit_codes(capsys):
    with pytest.raises(SystemExit) as exc:
        main(["radius", "--mode", "mu", "--N", "3", "--delta", "1", "--mu", "1"])
    assert exc.value.code == 2
    with pytest.raises(SystemExit) as exc:
        main(["radius", "--mode", "epsilon", "--N", "2", "--delta", "x"])
    assert exc.value.code == 2
    with pytest.raises(SystemExit) as exc:
        main(["radius", "--mode", "epsilon", "--N", "2", "--delta", "0", "--bogus"])
    assert exc.value.code == 2
    code, _, err = run(["radius", "--mode", "epsilon", "--N", "3", "--delta", "1/2", "--max-n", "3"], capsys)
    assert code == 3
    code, _, err = run(["radius", "--mode", "epsilon", "--N", "4", "--delta", "1/2", "--precision", "double"], capsys)
    assert code == 4 and "IllConditioned" in err


def test_help_lists_flags(capsys):
    with pytest.raises(SystemExit):
        main(["radius", "--help"])
    text = capsys.readouterr().out
    for flag in ("--mode", "--N", "--delta", "--mu", "--epsilon", "--precision", "--scale", "--format", "--out"):
        assert flag in text


@pytest.mark.parametrize(
    "argv",
    [
        ["verify", "--mode", "epsilon", "--N", "3", "--delta", "1/2", "--mu", "1/2", "--at", "half-radius"],
        ["verify", "--mode", "mu", "--N", "2", "--delta", "1", "--epsilon", "1", "--at", "1"],
        ["verify", "--mode", "epsilon", "--N", "2", "--delta", "1/2", "--mu", "0", "--at", "0.3"],
    ],
)
def test_verify_examples(argv, capsys):
    code, out, _ = run(argv, capsys)
    assert code == 0 and "PASS" in out


def test_verify_mismatch_exit(capsys):
    argv = ["verify", "--mode", "epsilon", "--N", "3", "--delta", "1/2", "--mu", "1/2", "--threshold", "0"]
    code, _, _ = run(argv, capsys)
    assert code == 5


def test_table1_files_are_deterministic(tmp_path, capsys):
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    for path in (a, b):
        code, _, err = run(["table1", "--n-max", "3", "--workers", "1", "--out", str(path)], capsys)
        assert code == 0
    assert a.read_bytes() == b.read_bytes()
    assert "(A)  2      6" in err


def test_output_directory_from_environment(tmp_path, capsys, monkeypatch):
    monkeypatch.setenv("NESS_RADIUS_OUT", str(tmp_path))
    code, _, _ = run(["fig1", "--N", "2,3,4", "--delta", "0,1/2", "--format", "json", "--workers", "1"], capsys)
    assert code == 0
    doc = json.loads((tmp_path / "fig1.json").read_text())
    assert {f["delta"] for f in doc["fits"]} == {"0", "1/2"}
    assert all(c["ok"] for c in doc["checks"])


def test_fig2_slope_report(tmp_path, capsys):
    out = tmp_path / "fig2.json"
    code, _, err = run(["fig2", "--N", "4", "--delta", "2^-4,2^-2,1,4", "--format", "json", "--out", str(out),
                        "--workers", "1"], capsys)
    assert code == 0
    doc = json.loads(out.read_text())
    assert doc["slopes"]["4"]["guideline"] == -1.0
    assert "guideline -1" in err


def test_budget_needs_allow_slow():
    with pytest.raises(SystemExit) as exc:
        main(["fig1", "--N", "6", "--delta", "1/2"])
    assert exc.value.code == 2


def test_xx_check(capsys):
    code, out, _ = run(["xx-check", "--N", "2,3,4"], capsys)
    assert code == 0 and out.count("PASS") == 3


def test_module_entry_point():
    proc = subprocess.run([sys.executable, "-m", "ness_radius", "--version"], capture_output=True, text=True)
    assert proc.returncode == 0 and "ness-radius" in proc.stdout
