import json
import re
from pathlib import Path

import numpy as np
import pytest

from gne_esc.cli import main
from gne_esc.scenarios import bundled_scenario_path, scenario_from_dict


def test_run_quadratic_full_info(tmp_path, capsys):
    code = main(
        ["run", "quadratic2", "--out-dir", str(tmp_path), "--eps-ball", "0.5"]
    )
    assert code == 0
    out = capsys.readouterr().out
    assert "run ok" in out
    traj = tmp_path / "quadratic2_trajectory.csv"
    metrics = json.loads((tmp_path / "quadratic2_metrics.json").read_text())
    manifest = json.loads((tmp_path / "quadratic2_manifest.json").read_text())
    assert traj.exists()
    assert metrics["dist_to_vgne"] < 1e-4
    assert metrics["status"] == "ok"
    assert manifest["scenario"]["name"] == "quadratic2"
    # long form is the default schema
    header = traj.read_text().splitlines()[0]
    assert header == "t,agent,var,value"


def test_run_wide_form_and_traces(tmp_path):
    code = main(
        [
            "run",
            "quadratic2",
            "--mode",
            "static_zero_order",
            "--step",
            "0.001",
            "--horizon",
            "3",
            "--out-dir",
            str(tmp_path),
            "--wide",
            "--trace-estimator",
            "--trace-messages",
        ]
    )
    assert code == 0
    header = (tmp_path / "quadratic2_trajectory.csv").read_text().splitlines()[0]
    assert header.startswith("t,u_1,u_2,lambda_1")
    assert (tmp_path / "quadratic2_estimator_trace.csv").exists()
    assert (tmp_path / "quadratic2_message_trace.csv").exists()


def test_manifest_roundtrip(tmp_path):
    assert main(["run", "quadratic2", "--horizon", "20", "--out-dir", str(tmp_path)]) == 0
    manifest = json.loads((tmp_path / "quadratic2_manifest.json").read_text())
    resolved = manifest["scenario"]
    again = scenario_from_dict(resolved)
    assert again.resolved == resolved


def test_validation_exit_code(tmp_path, capsys):
    bad = tmp_path / "broken.toml"
    src = bundled_scenario_path("connectivity").read_text()
    src = src.replace("coupling_bound = 14.0\n", "")
    bad.write_text(src)
    code = main(["run", str(bad), "--out-dir", str(tmp_path)])
    assert code == 2
    err = capsys.readouterr().err
    assert "coupling_bound" in err


def test_missing_scenario_is_validation_failure(tmp_path, capsys):
    code = main(["run", "nonexistent", "--out-dir", str(tmp_path)])
    assert code == 2


def test_runtime_failure_exit_code(tmp_path, capsys):
    # negative step survives parsing but fails when the run config is built
    code = main(["run", "quadratic2", "--step", "-0.01", "--out-dir", str(tmp_path)])
    assert code == 1
    assert "runtime failure" in capsys.readouterr().err


def test_sweep_singleton_matches_run(tmp_path):
    grid = tmp_path / "grid.toml"
    grid.write_text("[axes]\nhorizon = [40.0]\n")
    assert (
        main(
            [
                "sweep",
                "quadratic2",
                str(grid),
                "--out-dir",
                str(tmp_path / "sweep"),
                "--eps-ball",
                "0.5",
            ]
        )
        == 0
    )
    assert (
        main(
            [
                "run",
                "quadratic2",
                "--horizon",
                "40",
                "--out-dir",
                str(tmp_path / "run"),
                "--eps-ball",
                "0.5",
            ]
        )
        == 0
    )
    sweep_lines = (tmp_path / "sweep" / "quadratic2_sweep.csv").read_text().splitlines()
    assert sweep_lines[0] == "horizon,dist_to_vgne,entry_time,max_violation,status"
    assert len(sweep_lines) == 2
    run_metrics = json.loads((tmp_path / "run" / "quadratic2_metrics.json").read_text())
    swept_dist = float(sweep_lines[1].split(",")[1])
    assert swept_dist == pytest.approx(run_metrics["dist_to_vgne"], rel=1e-12)
    marginals = json.loads(
        (tmp_path / "sweep" / "quadratic2_sweep_marginals.json").read_text()
    )
    assert "horizon" in marginals


def test_sweep_bad_grid_is_validation_failure(tmp_path, capsys):
    grid = tmp_path / "grid.toml"
    grid.write_text("[axes]\n")
    assert main(["sweep", "quadratic2", str(grid), "--out-dir", str(tmp_path)]) == 2


def test_verify_reports_checks(tmp_path, capsys):
    code = main(["verify", "quadratic2", "--out-dir", str(tmp_path)])
    assert code == 0
    out = capsys.readouterr().out
    assert "monotonicity probe" in out
    assert "step-size certificate" in out
    assert "matrix identity" in out
    assert "resolvent inequality probe" in out
    assert "[PASS]" in out


def test_verify_flags_oversized_steps(tmp_path, capsys):
    modified = tmp_path / "big_steps.toml"
    src = bundled_scenario_path("quadratic2").read_text()
    src = re.sub(r"gamma = 0.1", "gamma = 100.0", src)
    src = re.sub(r"gamma0 = 0.1", "gamma0 = 100.0", src)
    modified.write_text(src)
    code = main(["verify", str(modified), "--out-dir", str(tmp_path)])
    assert code == 0
    out = capsys.readouterr().out
    assert "[FAIL] step-size certificate" in out


def test_verify_warns_on_zero_dither(tmp_path, capsys):
    modified = tmp_path / "no_dither.toml"
    src = bundled_scenario_path("quadratic2").read_text()
    src = src.replace("amplitude = 8.0", "amplitude = 0.0")
    modified.write_text(src)
    code = main(["verify", str(modified), "--out-dir", str(tmp_path)])
    assert code == 0
    out = capsys.readouterr().out
    assert "[WARN] persistence of excitation" in out
