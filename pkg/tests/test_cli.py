"""Command-line surface: flags, exit codes, file round-trips."""
import json
import subprocess
import sys

import pytest

import gibbs_forge.cli as cli
from gibbs_forge.core_model import load_graph


def run_main(args, capsys):
    rc = cli.main(args)
    captured = capsys.readouterr()
    summary = json.loads(captured.out) if captured.out.strip() else None
    return rc, summary, captured.err


def test_slack_subcommand(capsys):
    rc, summary, _ = run_main(
        ["slack", "--model", "nae", "--k", "3", "--d", "1"], capsys)
    assert rc == 0
    assert abs(summary["slack"] - 1.0 / 3.0) <= 1e-12


def test_config_file_model_source(tmp_path, capsys):
    cfgfile = tmp_path / "model.cfg"
    cfgfile.write_text("family=potts\nq=3\nk=2\nbeta=-0.5\n")
    rc, summary, _ = run_main(
        ["slack", "--config", str(cfgfile), "--d", "2"], capsys)
    assert rc == 0
    assert summary["config"]["spec"]["family"] == "potts"


def test_gen_then_sample_roundtrip(tmp_path, capsys):
    gpath = tmp_path / "g.txt"
    rc, _, _ = run_main(
        ["gen", "--model", "colouring", "--q", "3", "--n", "10",
         "--d", "1.2", "--seed", "5", "--out", str(gpath)], capsys)
    assert rc == 0
    g, _ = load_graph(str(gpath))
    assert g.n == 10
    spath = tmp_path / "s.jsonl"
    rc, summary, _ = run_main(
        ["sample", "--in", str(gpath), "--samples", "5", "--seed", "1",
         "--out", str(spath)], capsys)
    assert rc == 0
    assert summary["ok"] + summary["fail"] == 5
    assert len(spath.read_text().splitlines()) == 5


def test_beta_minus_inf_spelling(capsys, tmp_path):
    rc, summary, _ = run_main(
        ["gen", "--model", "potts", "--q", "3", "--beta=-inf",
         "--n", "6", "--d", "1.0", "--out", str(tmp_path / "g.txt")],
        capsys)
    assert rc == 0
    assert summary["config"]["spec"]["beta"] == "-inf"


def test_exit_two_on_config_error(capsys):
    rc, summary, err = run_main(["slack", "--model", "potts", "--d", "2"],
                                capsys)
    assert rc == 2
    assert summary is None
    assert "InvalidSpec" in err


def test_exit_two_on_unknown_flag(capsys):
    rc = cli.main(["sample", "--frobnicate"])
    capsys.readouterr()
    assert rc == 2


def test_exit_three_on_verification_failure(monkeypatch, capsys):
    monkeypatch.setattr(cli, "run_experiment",
                        lambda cfg: {"passed": False, "max_residual": 1.0})
    rc, summary, _ = run_main(["verify-db"], capsys)
    assert rc == 3
    assert summary["passed"] is False


def test_verify_db_passes_for_real(tmp_path, capsys):
    rc, summary, _ = run_main(
        ["verify-db", "--out", str(tmp_path / "resid.csv")], capsys)
    assert rc == 0
    assert summary["max_residual"] <= 1e-9


def test_console_script_entry_point(tmp_path):
    proc = subprocess.run(
        [sys.executable, "-m", "gibbs_forge.cli", "slack", "--model",
         "nae", "--k", "3", "--d", "1"],
        capture_output=True, text=True, timeout=120)
    assert proc.returncode == 0
    assert abs(json.loads(proc.stdout)["slack"] - 1.0 / 3.0) <= 1e-12
