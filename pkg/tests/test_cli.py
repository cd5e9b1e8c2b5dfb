"""Command-line interface: run / attack / analyze, flags, scenario files."""

import json
import subprocess
import sys

import pytest

from otmix.cli import main


def run_cli(capsys, *argv):
    rc = main(list(argv))
    out = capsys.readouterr().out
    return rc, out


def test_run_subcommand(capsys, tmp_path):
    out_file = tmp_path / "metrics.jsonl"
    rc, out = run_cli(
        capsys, "run",
        "--q1", "1", "--q2", "1", "--q3", "3", "--alpha", "1",
        "--beta1", "2", "--lambda", "2", "--tau", "5", "--gamma", "32", "--zeta", "32",
        "--clients", "4", "--messages", "6", "--rate", "2.0",
        "--duration", "300", "--seed", "3", "--out", str(out_file),
    )
    assert rc == 0
    report = json.loads(out)
    assert report["delivered"] == report["tracked"] == 6
    assert report["cross_delivered"] == 0
    lines = out_file.read_text().strip().splitlines()
    assert all(json.loads(line) for line in lines)


def test_run_rejects_invalid_config(capsys):
    rc = main(["run", "--q3", "5", "--alpha", "1"])  # rho=4 violates alpha >= rho/3
    assert rc == 2


def test_analyze_subcommand(capsys):
    rc, out = run_cli(
        capsys, "analyze",
        "--q1", "2", "--q2", "2", "--q3", "5", "--alpha", "2",
        "--beta1", "4", "--lambda", "4", "--tau", "10",
    )
    assert rc == 0
    report = json.loads(out)
    assert report["sender_anonymity_set"] == 32.0
    assert report["expected_publication_latency_s"] == 12.5


def test_analyze_monte_carlo(capsys):
    rc, out = run_cli(
        capsys, "analyze",
        "--q1", "1", "--q2", "1", "--q3", "3", "--alpha", "1",
        "--beta1", "3", "--lambda", "3", "--tau", "6",
        "--monte-carlo", "--mc-messages", "20000",
    )
    assert rc == 0
    mc = json.loads(out)["monte_carlo"]
    assert abs(mc["standard_dwell_mean"] - 2.0) < 0.1      # (lam+1)/2
    assert abs(mc["pool_dwell_mean"] - 2.0) < 0.1


def test_attack_replay(capsys):
    rc, out = run_cli(
        capsys, "attack", "--kind", "replay",
        "--q1", "1", "--q2", "1", "--q3", "3", "--alpha", "1",
        "--beta1", "2", "--lambda", "2", "--tau", "5", "--gamma", "64", "--zeta", "32",
        "--clients", "8", "--messages", "60", "--seed", "5",
    )
    assert rc == 0
    result = json.loads(out)
    assert result["replay_drops"] == result["injections"]


def test_scenario_file_applies(capsys, tmp_path):
    scn = tmp_path / "drop.scn"
    scn.write_text("# drop everything the first client submits\n"
                   "at=0 action=disable_dummies\n")
    rc, out = run_cli(
        capsys, "run",
        "--q1", "1", "--q2", "1", "--q3", "3", "--alpha", "1",
        "--beta1", "2", "--lambda", "2", "--tau", "5", "--gamma", "32", "--zeta", "32",
        "--clients", "4", "--messages", "4", "--rate", "2.0",
        "--duration", "300", "--seed", "4", "--scenario", str(scn),
    )
    assert rc == 0
    assert json.loads(out)["delivered"] == 4


def test_console_entry_point():
    proc = subprocess.run(
        [sys.executable, "-m", "otmix.cli", "analyze", "--q1", "1", "--q2", "1",
         "--q3", "3", "--alpha", "1", "--beta1", "2", "--lambda", "2"],
        capture_output=True, text=True, timeout=120,
    )
    assert proc.returncode == 0
    assert json.loads(proc.stdout)["pool_conversion_gain_bits"] > 0
