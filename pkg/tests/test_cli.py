import json
from pathlib import Path

import numpy as np
import pytest
from click.testing import CliRunner

from mrendo.cli import main


@pytest.fixture()
def runner():
    return CliRunner()


def run_ok(runner, args):
    result = runner.invoke(main, args, catch_exceptions=False)
    assert result.exit_code == 0, result.output
    return result


def test_fk_straight_rod(runner, tmp_path):
    out = tmp_path / "fk"
    result = run_ok(runner, ["fk", "--out-dir", str(out), "--format", "json",
                             "--no-plot"])
    doc = json.loads(result.stdout)
    assert abs(doc["bend_angle_deg"]) < 1e-9
    csv = (out / "rod_state.csv").read_text().strip().split("\n")
    assert csv[0] == "# format: rodstate/1"
    assert len(csv) == 2 + 101
    assert (out / "tip_pose.json").exists()


def test_fk_table1_axial_current(runner, tmp_path):
    result = run_ok(runner, ["fk", "-I", "axial=0.213", "--format", "json",
                             "--out-dir", str(tmp_path / "fk"), "--no-plot"])
    doc = json.loads(result.stdout)
    assert abs(doc["bend_angle_deg"] - 90.0) <= 5.0


def test_fk_deterministic_artifacts(runner, tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    for out in (a, b):
        run_ok(runner, ["fk", "-I", "axial=0.1", "--out-dir", str(out), "--no-plot"])
    assert (a / "rod_state.csv").read_bytes() == (b / "rod_state.csv").read_bytes()
    assert (a / "tip_pose.json").read_bytes() == (b / "tip_pose.json").read_bytes()


def test_fk_rejects_unknown_coil_and_bad_config(runner, tmp_path):
    result = runner.invoke(main, ["fk", "-I", "ghost=0.1", "--no-plot",
                                  "--out-dir", str(tmp_path / "x")])
    assert result.exit_code == 2
    bad = tmp_path / "bad.json"
    bad.write_text("{\"schema\": \"wrong\"}")
    result = runner.invoke(main, ["fk", "--config", str(bad), "--no-plot",
                                  "--out-dir", str(tmp_path / "y")])
    assert result.exit_code == 2
    assert "schema" in result.output or "schema" in result.stderr


def test_ik_ninety_degrees(runner, tmp_path):
    result = run_ok(runner, ["ik", "--bend", "90", "--format", "json",
                             "--out-dir", str(tmp_path / "ik"), "--no-plot"])
    doc = json.loads(result.stdout)
    assert abs(doc["currents"]["axial"] - 0.213) / 0.213 < 0.2
    assert abs(doc["currents"]["saddle_x"]) < 5e-3
    assert abs(doc["currents"]["saddle_y"]) < 5e-3
    assert doc["converged"] and doc["consistent"]


def test_ik_zero_and_hundred(runner, tmp_path):
    doc = json.loads(run_ok(runner, ["ik", "--bend", "0", "--format", "json",
                                     "--out-dir", str(tmp_path / "o"), "--no-plot"]).stdout)
    assert all(abs(v) < 1e-12 for v in doc["currents"].values())
    doc = json.loads(run_ok(runner, ["ik", "--bend", "100", "--format", "json",
                                     "--out-dir", str(tmp_path / "h"), "--no-plot"]).stdout)
    assert all(abs(v) <= 0.3 for v in doc["currents"].values())


def test_ablation_reference_table(runner, tmp_path):
    result = run_ok(runner, ["ablation", "--format", "json",
                             "--out-dir", str(tmp_path / "abl"), "--no-plot"])
    doc = json.loads(result.stdout)
    assert np.allclose(doc["powers_w"], [0.0275, 0.110, 0.440, 0.6875], atol=1e-6)
    assert doc["capable"] == [False, False, False, True]


def test_design_curve_summary(runner, tmp_path):
    result = run_ok(runner, ["design-curve", "--ratios", "0.1:0.9:17",
                             "--format", "json", "--out-dir",
                             str(tmp_path / "dc"), "--no-plot"])
    doc = json.loads(result.stdout)
    assert 0.1 < doc["optimum_ratio"] < 0.9
    assert (tmp_path / "dc" / "design_curve.csv").exists()


def test_design_curve_infeasible_sweep_exit_five(runner, tmp_path):
    # ratios so small the coil cannot hold 90 degrees within its current limit
    result = runner.invoke(main, ["design-curve", "--ratios", "0.02:0.04:3",
                                  "--format", "json", "--no-plot",
                                  "--out-dir", str(tmp_path / "dcx")])
    assert result.exit_code == 5
    assert "no feasible ratio" in result.output + result.stderr


def test_workspace_summary(runner, tmp_path):
    result = run_ok(runner, ["workspace", "--grid", "15", "--format", "json",
                             "--out-dir", str(tmp_path / "ws"), "--no-plot"])
    doc = json.loads(result.stdout)
    assert doc["max_bend_deg"] >= 100.0
    hull = json.loads((tmp_path / "ws" / "workspace_hull.json").read_text())
    assert len(hull["boundary_mm"]) >= 3


def test_grasper_report(runner, tmp_path):
    result = run_ok(runner, ["grasper", "--format", "json",
                             "--out-dir", str(tmp_path / "g"), "--no-plot"])
    doc = json.loads(result.stdout)
    assert abs(doc["force_at_max_n"] - 0.217) / 0.217 < 0.02
    assert abs(doc["coil_resistance_ohm"] - 11.0) / 11.0 < 0.15
    assert doc["measured_max_force_n"] == 0.031


def test_serve_scenario_exit_zero(runner, tmp_path):
    result = run_ok(runner, ["serve", "--scenario", "fig8-navigation",
                             "--format", "json", "--out-dir", str(tmp_path / "s")])
    doc = json.loads(result.stdout)
    assert doc["tumor_reached"] is True
    assert doc["collisions"] == 0
    assert doc["passed"] is True
    assert Path(doc["telemetry_ndjson"]).exists()


def test_serve_invalid_phantom_exit_two(runner, tmp_path):
    bad = tmp_path / "phantom.json"
    bad.write_text(json.dumps({"schema": "phantom/1", "wall_polygons": [],
                               "entry": {}, "tumor": {"center_mm": [0, 0],
                                                      "radius_mm": 1.0}}))
    result = runner.invoke(main, ["serve", "--phantom", str(bad),
                                  "--scenario", "fig8-navigation",
                                  "--out-dir", str(tmp_path / "sx")])
    assert result.exit_code == 2
    assert "tumor" in (result.output + result.stderr) or "polygon" in (result.output + result.stderr)


def test_unknown_scenario_exit_two(runner, tmp_path):
    result = runner.invoke(main, ["serve", "--scenario", "nope",
                                  "--out-dir", str(tmp_path / "sn")])
    assert result.exit_code == 2


def test_plot_artifacts_rendered(runner, tmp_path):
    out = tmp_path / "figs"
    run_ok(runner, ["fk", "-I", "axial=0.2", "--out-dir", str(out)])
    assert (out / "rod_state.png").stat().st_size > 1000
