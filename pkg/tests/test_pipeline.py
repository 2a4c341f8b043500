"""End-to-end pipeline runs on a small configuration."""

import json

import numpy as np
import pytest

from oscbench.config import ExperimentConfig, RunManifest
from oscbench.pipeline import StageError, emit_plots, run_pipeline

SMALL = dict(J=4, r=3, k=1, seed=1,
             g={"2,1": [0.5, 0.0], "1,2": [0.5, 0.0]},
             dt=2e-3, T=1.0, eps_list=[0.1, 0.05])


def small_config(out_dir, **over):
    params = dict(SMALL)
    params.update(over)
    return ExperimentConfig(out_dir=str(out_dir), **params)


@pytest.fixture(scope="module")
def completed_run(tmp_path_factory):
    out = tmp_path_factory.mktemp("run")
    cfg = small_config(out)
    return cfg, run_pipeline(cfg)


def test_pipeline_artifacts(completed_run):
    cfg, manifest = completed_run
    out = cfg.out_dir
    import pathlib

    for name in ("frequencies.csv", "polynomial.csv", "decay_ratios.csv",
                 "drift_vs_eps.csv", "slope.txt", "torus_distance.csv",
                 "energy_dt.csv", "summary.md", "manifest.json"):
        assert pathlib.Path(out, name).exists(), name
    assert set(manifest.stages) == {"sample", "scan", "expand", "normal_form",
                                    "evolve", "report"} - {"report"}
    # the normalization gate actually passed
    worst = max(float(v) for v in manifest.stages["normal_form"]["residuals"].values())
    assert worst <= 1e-10
    assert float(manifest.stages["normal_form"]["terminal_nonaction"]) <= 1e-10


def test_slope_file_is_one_float(completed_run):
    cfg, _ = completed_run
    from pathlib import Path

    text = Path(cfg.out_dir, "slope.txt").read_text().strip()
    slope = float(text)
    assert np.isfinite(slope)


def test_manifest_matches_files_on_disk(completed_run):
    cfg, manifest = completed_run
    from pathlib import Path

    saved = RunManifest.load(Path(cfg.out_dir, "manifest.json"))
    assert saved.fingerprint() == manifest.fingerprint()
    assert saved.files  # non-empty inventory
    meta = json.loads(Path(cfg.out_dir, "manifest.json").read_text())
    assert meta["config_hash"] == cfg.config_hash()


def test_pipeline_is_deterministic(completed_run, tmp_path):
    cfg, manifest = completed_run
    again = run_pipeline(small_config(tmp_path / "other"))
    assert again.fingerprint() == manifest.fingerprint()


@pytest.mark.filterwarnings("ignore:fewer than two epsilon")
def test_seed_changes_fingerprint(tmp_path):
    m = run_pipeline(small_config(tmp_path / "a", seed=2, eps_list=[0.1]))
    n = run_pipeline(small_config(tmp_path / "b", seed=3, eps_list=[0.1]))
    assert m.fingerprint() != n.fingerprint()


def test_single_eps_warns_and_skips_slope(tmp_path):
    cfg = small_config(tmp_path / "one", eps_list=[0.1])
    with pytest.warns(UserWarning):
        run_pipeline(cfg)
    from pathlib import Path

    assert not Path(cfg.out_dir, "slope.txt").exists()
    assert Path(cfg.out_dir, "drift_vs_eps.csv").exists()


def test_unattainable_gamma_fails_in_scan_stage(tmp_path):
    # demanding a nonresonance level above the actual spectral gaps must
    # halt the run at the scan and name that stage
    cfg = small_config(tmp_path / "res", gamma=10.0)
    with pytest.raises(StageError) as err:
        run_pipeline(cfg)
    assert err.value.stage == "scan"
    assert "scan" in str(err.value)


def test_emit_plots(completed_run):
    cfg, _ = completed_run
    files = emit_plots(cfg.out_dir)
    names = {f.name for f in files}
    assert "drift_vs_eps.png" in names
    assert "energy_dt.png" in names
    assert "decay_ratios.png" in names
    for f in files:
        assert f.stat().st_size > 0


def test_emit_plots_requires_manifest(tmp_path):
    with pytest.raises(FileNotFoundError):
        emit_plots(tmp_path)
