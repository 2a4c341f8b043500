"""Command-line surface: each subcommand runs and writes what it claims."""

import json

import pytest

from oscbench.cli import main

SMALL_CFG = {
    "J": 4, "r": 3, "k": 1, "seed": 1,
    "g": {"2,1": [0.5, 0.0], "1,2": [0.5, 0.0]},
    "dt": 2e-3, "T": 1.0, "eps_list": [0.1, 0.05],
}


def write_cfg(tmp_path, **over):
    params = dict(SMALL_CFG)
    params.update(over)
    params.setdefault("out_dir", str(tmp_path / "run"))
    path = tmp_path / "config.json"
    path.write_text(json.dumps(params))
    return path


def test_overlap_command(tmp_path, capsys):
    out = tmp_path / "table.csv"
    assert main(["overlap", "--k", "3", "--J", "5", "--out", str(out)]) == 0
    assert out.exists()
    assert "nonzero overlaps" in capsys.readouterr().out


def test_overlap_command_uses_cache_dir(tmp_path):
    assert main(["overlap", "--k", "3", "--J", "4",
                 "--cache-dir", str(tmp_path)]) == 0
    assert list(tmp_path.glob("overlap_k3_J4_*.csv"))


def test_resonance_command_generic(tmp_path, capsys):
    report = tmp_path / "scan.json"
    rc = main(["resonance", "--J", "8", "--r", "4", "--seed", "2",
               "--out", str(report)])
    assert rc == 0
    data = json.loads(report.read_text())
    assert data["admissible_gamma"] > 0
    assert data["violations"] == []
    assert "admissible gamma" in capsys.readouterr().out


def test_resonance_command_flags_resonant_spectrum(tmp_path, capsys):
    rc = main(["resonance", "--J", "6", "--r", "4", "--m0", "--gamma", "1e-6"])
    assert rc == 1
    out = capsys.readouterr().out
    assert "VIOLATION" in out
    assert "admissible gamma*: 0" in out


def test_verify_combinatorics_command(tmp_path, capsys):
    report = tmp_path / "lemmas.json"
    rc = main(["verify", "combinatorics", "--j-bound", "30",
               "--pair-bound", "8", "--samples", "100", "--out", str(report)])
    assert rc == 0
    data = json.loads(report.read_text())
    assert data["sup_l_times_a"] <= 2.0
    assert data["sup_a_over_majorant"] <= 1.0


def test_normalform_command(tmp_path, capsys):
    cfg = write_cfg(tmp_path)
    rc = main(["normalform", "--config", str(cfg)])
    assert rc == 0
    run_dir = tmp_path / "run" / "normal_form"
    assert (run_dir / "normal_form.json").exists()
    assert (run_dir / "chi_3.csv").exists()
    out = capsys.readouterr().out
    assert "terminal non-action" in out


def test_evolve_command(tmp_path, capsys):
    cfg = write_cfg(tmp_path)
    traj = tmp_path / "traj.csv"
    rc = main(["evolve", "--config", str(cfg), "--T", "0.5",
               "--out", str(traj)])
    assert rc == 0
    header = traj.read_text().splitlines()[0]
    assert header == "t,H,l2,drift"
    assert "max |H - H(0)|" in capsys.readouterr().out


def test_pipeline_command_with_plots(tmp_path, capsys):
    cfg = write_cfg(tmp_path)
    rc = main(["pipeline", "--config", str(cfg), "--plots"])
    assert rc == 0
    run = tmp_path / "run"
    assert (run / "manifest.json").exists()
    assert (run / "drift_vs_eps.png").exists()
    out = capsys.readouterr().out
    assert "fingerprint" in out
    # slope file holds a single parseable float
    float((run / "slope.txt").read_text())


def test_plots_command_needs_a_run(tmp_path, capsys):
    rc = main(["plots", "--run", str(tmp_path)])
    assert rc == 2
    assert "manifest" in capsys.readouterr().err


def test_config_errors_are_reported_not_raised(tmp_path, capsys):
    cfg = write_cfg(tmp_path, r=2)
    rc = main(["normalform", "--config", str(cfg)])
    assert rc == 2
    assert "error" in capsys.readouterr().err


def test_flag_overrides_config(tmp_path):
    cfg = write_cfg(tmp_path)
    rc = main(["resonance", "--J", "6", "--r", "3", "--seed", "7"])
    assert rc == 0
