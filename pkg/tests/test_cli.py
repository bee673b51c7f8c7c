"""Command line behaviour: exit codes, output files, determinism, verification."""
import csv
import filecmp
import json
import os

import pytest

from jarnik.cli import (EXIT_CONFIG, EXIT_CONSISTENCY, EXIT_INTERNAL, EXIT_OK,
                        build_config, emit_plotdata, main, p_intlist, p_rational)
from jarnik.counting import AuditGrid, local_counting_audit
from jarnik.fourier import dim_l1_estimate
from jarnik.fractal import DigitSystem
from jarnik.plotting import write_dat

TINY = ["audit-counting", "Q=2^4,2^5", "tau=1.1", "max_balls=1", "digits=0,1,2,3"]


def run_cli(tmp_path, *args, capsys=None):
    code = main(["--out-dir", str(tmp_path), *args])
    return code


def test_formula_example_value(tmp_path, capsys):
    code = main(["--out-dir", str(tmp_path), "formulas", "upper-dim",
                 "d=1", "delta=0.63093", "tau=3"])
    assert code == EXIT_OK
    with open(tmp_path / "formulas-upper-dim.json") as fh:
        res = json.load(fh)["result"]
    assert res["value"] == pytest.approx(0.13093, abs=1e-12)
    assert all(p["ok"] for p in res["preconditions"])


def test_formula_precondition_failure_exit_2(tmp_path, capsys):
    code = main(["--out-dir", str(tmp_path), "formulas", "upper-dim",
                 "d=1", "delta=1", "tau=1/2"])
    assert code == EXIT_CONFIG
    with open(tmp_path / "formulas-upper-dim.json") as fh:
        res = json.load(fh)["result"]
    assert res["value"] is None
    assert not all(p["ok"] for p in res["preconditions"])


def test_counting_tiny_grid_full_digits(tmp_path, capsys):
    code = main(["--out-dir", str(tmp_path), "audit-counting", "Q=2^4,2^5",
                 "tau=1.1", "max_balls=1"])
    assert code == EXIT_OK
    with open(tmp_path / "audit-counting.csv", newline="") as fh:
        rows = list(csv.reader(fh))
    assert rows[0][-1] == "config_hash"
    assert len(rows) >= 2


def test_consistency_guard_exit_3(tmp_path, capsys):
    code = main(["--out-dir", str(tmp_path), *TINY, "alpha=13"])
    assert code == EXIT_CONSISTENCY
    assert "refused" in capsys.readouterr().err


@pytest.mark.parametrize("args", [
    ["audit-counting", "theta=0.5"],
    ["audit-counting", "theta=1e-3"],
    ["audit-counting", "bogus=1"],
    ["no-such-command"],
    ["audit-counting", "Q"],
    ["audit-counting", "digits=0,9"],
])
def test_invalid_configuration_exit_2(tmp_path, capsys, args):
    assert main(["--out-dir", str(tmp_path), *args]) == EXIT_CONFIG


def test_rational_parser():
    assert p_rational("1/3").denominator == 3
    assert p_intlist("2^3..2^5") == [8, 16, 32]
    assert p_intlist("3..5") == [3, 4, 5]


def test_rerun_is_byte_identical(tmp_path, capsys):
    a, b = tmp_path / "a", tmp_path / "b"
    for d in (a, b):
        assert main(["--out-dir", str(d), "--figures", *TINY]) == EXIT_OK
    names = sorted(os.listdir(a))
    assert names == sorted(os.listdir(b))
    assert any(n.endswith(".png") for n in names)
    match, mismatch, errors = filecmp.cmpfiles(a, b, names, shallow=False)
    assert not mismatch and not errors


def test_every_output_carries_hash(tmp_path, capsys):
    assert main(["--out-dir", str(tmp_path), *TINY]) == EXIT_OK
    with open(tmp_path / "audit-counting.manifest.json") as fh:
        man = json.load(fh)
    h = man["config_hash"]
    for fname in man["files"]:
        with open(tmp_path / fname) as fh:
            text = fh.read()
        if fname.endswith(".dat"):
            assert text.startswith(f"# config_hash: {h}\n")
        else:
            assert h in text


def test_verify_outputs_detects_tampering(tmp_path, capsys):
    assert main(["--out-dir", str(tmp_path), *TINY]) == EXIT_OK
    before = sorted(os.listdir(tmp_path))
    assert main(["verify-outputs", f"dir={tmp_path}"]) == EXIT_OK
    assert sorted(os.listdir(tmp_path)) == before
    with open(tmp_path / "audit-counting.csv", "a") as fh:
        fh.write("x\n")
    capsys.readouterr()
    assert main(["verify-outputs", f"dir={tmp_path}"]) == EXIT_INTERNAL
    report = json.loads(capsys.readouterr().out)
    assert not report["ok"]


def test_hash_ignores_output_location(tmp_path):
    c1 = build_config(["--out-dir", str(tmp_path / "x"), *TINY])
    c2 = build_config(["--out-dir", str(tmp_path / "y"), "--figures", *TINY])
    c3 = build_config(["--out-dir", str(tmp_path / "y"), "--seed", "1", *TINY])
    assert c1.config_hash() == c2.config_hash() != c3.config_hash()


def test_defaults_enter_the_hash():
    explicit = build_config(["audit-counting", "beta=1/5"])
    implicit = build_config(["audit-counting"])
    assert explicit.config_hash() == implicit.config_hash()


def test_config_file_overridden_by_command_line(tmp_path):
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps({"command": "audit-counting", "seed": 4,
                                "params": {"tau": 1.3, "max_balls": 2}}))
    cfg = build_config(["--config", str(path), "--seed", "9", "tau=1.5"])
    assert cfg.seed == 9
    assert cfg.resolved()["tau"] == "1.5"
    assert cfg.resolved()["max_balls"] == "2"


def test_thread_variable_validated(tmp_path, capsys, monkeypatch):
    monkeypatch.setenv("JARNIK_THREADS", "zero")
    assert main(["--out-dir", str(tmp_path), *TINY]) == EXIT_CONFIG
    monkeypatch.setenv("JARNIK_THREADS", "1")
    assert main(["--out-dir", str(tmp_path), *TINY]) == EXIT_OK


def test_plotdata_for_empty_report(tmp_path):
    plots = emit_plotdata({})
    (name, (series, header)), = plots.items()
    assert series == []
    path = tmp_path / "e.dat"
    write_dat(str(path), series, header, "abc")
    lines = path.read_text().splitlines()
    assert lines[0] == "# config_hash: abc"
    assert all(line.startswith("#") for line in lines)


def test_plotdata_series_from_reports():
    prof = dim_l1_estimate(DigitSystem(3, ((0, 2),)), [27, 81, 243])
    (pts, _), = emit_plotdata(prof).values()
    assert len(pts) == 3 and pts[0][0] < pts[1][0]
    rep = local_counting_audit(DigitSystem(5, ((0, 1, 2, 3, 4),)),
                               AuditGrid((16, 32), (1.1,), max_balls=1))
    series = emit_plotdata(rep)
    assert series and all(len(pts) == 2 for pts, _ in series.values())


def test_every_command_runs(tmp_path, capsys):
    quick = {
        "audit-global": ["Q=2^5,2^6", "tau=1.05"],
        "audit-cover": ["Q=2^5,2^6", "tau=1.05"],
        "fourier-dim": ["M=5^3..5^5"],
        "simplex-check": ["Q=6", "trials=50"],
        "decay-check": ["samples=50"],
        "cover-check": ["families=10", "size=10"],
    }
    for cmd, args in quick.items():
        assert main(["--out-dir", str(tmp_path), cmd, *args]) == EXIT_OK, cmd
        assert os.path.exists(tmp_path / f"{cmd}.manifest.json")
